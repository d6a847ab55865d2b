#ifndef EBSC_ERRORS_HPP
#define EBSC_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace ebsc {

// Caller supplied arguments outside the documented domain.
class precondition_error : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// A factorization or solve failed on otherwise valid input.
class numerical_error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

namespace detail {

inline void require(bool ok, const std::string& what)
{
    if (!ok) throw precondition_error(what);
}

} // namespace detail
} // namespace ebsc

#endif
