#ifndef EBSC_TOOLS_CLI_HPP
#define EBSC_TOOLS_CLI_HPP

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

namespace ebsc::cli {

inline constexpr const char* version = "1.0.0";

enum exit_code : int {
    ok = 0,
    failure = 1,
    parse_error = 2,
    precondition = 3,
    strict_escalation = 4,
};

class parse_failure : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct DataFile {
    Eigen::VectorXd t;
    Eigen::VectorXd y;
    bool has_design = false;
    int interpolated = 0;
    int n() const { return static_cast<int>(y.size()); }
};

DataFile parse_data(const std::string& text, bool interpolate_missing);
DataFile read_data(const std::filesystem::path& path, bool interpolate_missing);

// Shortest round-trip decimal form; locale independent.
std::string format_number(double v);

std::uint64_t fnv1a(const std::string& s);

// Entry point shared by the executable and the tests. argv[0] is ignored.
int run(const std::vector<std::string>& args);

} // namespace ebsc::cli

#endif
