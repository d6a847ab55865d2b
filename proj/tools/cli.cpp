#include "cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <limits>
#include <optional>
#include <sstream>
#include <system_error>

#include "ebsc/credible.hpp"
#include "ebsc/driver.hpp"
#include "ebsc/errors.hpp"
#include "ebsc/noise_model.hpp"
#include "ebsc/simulation.hpp"

namespace ebsc::cli {

using nlohmann::json;
namespace fs = std::filesystem;

std::string format_number(double v)
{
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

std::uint64_t fnv1a(const std::string& s)
{
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

namespace {

std::string hex(std::uint64_t v)
{
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

std::optional<double> parse_double(std::string_view s)
{
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '"')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '"' || s.back() == '\r'))
        s.remove_suffix(1);
    if (s.empty()) return std::nullopt;
    if (s.front() == '+') s.remove_prefix(1);
    double v = 0.0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || p != s.data() + s.size()) return std::nullopt;
    return v;
}

bool is_missing_token(std::string_view s)
{
    std::string t;
    for (char c : s)
        if (c != ' ' && c != '\t' && c != '"' && c != '\r') t.push_back(static_cast<char>(std::tolower(c)));
    return t.empty() || t == "na" || t == "nan" || t == "null";
}

std::vector<std::string> split_fields(const std::string& line)
{
    char delim = 0;
    for (char c : {',', '\t', ';'})
        if (line.find(c) != std::string::npos) {
            delim = c;
            break;
        }
    std::vector<std::string> out;
    if (delim) {
        std::string cur;
        for (char c : line) {
            if (c == delim) {
                out.push_back(cur);
                cur.clear();
            } else {
                cur.push_back(c);
            }
        }
        out.push_back(cur);
    } else {
        std::istringstream is(line);
        std::string tok;
        while (is >> tok) out.push_back(tok);
    }
    return out;
}

void fill_missing(std::vector<double>& y, std::vector<int>& lines)
{
    const int n = static_cast<int>(y.size());
    int first = -1;
    for (int i = 0; i < n; ++i)
        if (!std::isnan(y[i])) {
            first = i;
            break;
        }
    if (first < 0) throw parse_failure("no observed values to interpolate from");
    for (int i = 0; i < first; ++i) y[i] = y[first];
    int last = first;
    for (int i = first + 1; i < n; ++i) {
        if (std::isnan(y[i])) continue;
        for (int k = last + 1; k < i; ++k) y[k] = y[last] + (y[i] - y[last]) * (k - last) / double(i - last);
        last = i;
    }
    for (int i = last + 1; i < n; ++i) y[i] = y[last];
    (void)lines;
}

} // namespace

DataFile parse_data(const std::string& text, bool interpolate_missing)
{
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    int columns = 0;
    bool seen_data = false;
    std::vector<double> t, y;
    std::vector<int> lines;
    int missing = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        const auto pos = line.find_first_not_of(" \t");
        if (pos == std::string::npos || line[pos] == '#') continue;
        const auto fields = split_fields(line);
        if (fields.size() < 1 || fields.size() > 2)
            throw parse_failure("line " + std::to_string(lineno) + ": expected 1 or 2 columns, found " +
                                std::to_string(fields.size()));
        std::vector<std::optional<double>> vals;
        bool numeric = true;
        for (const auto& f : fields) {
            auto v = parse_double(f);
            if (!v && !is_missing_token(f)) numeric = false;
            vals.push_back(v);
        }
        if (!numeric) {
            if (seen_data) throw parse_failure("line " + std::to_string(lineno) + ": non-numeric field");
            if (columns != 0) throw parse_failure("line " + std::to_string(lineno) + ": second header line");
            columns = static_cast<int>(fields.size());
            continue;
        }
        if (columns == 0) columns = static_cast<int>(fields.size());
        if (static_cast<int>(fields.size()) != columns)
            throw parse_failure("line " + std::to_string(lineno) + ": expected " + std::to_string(columns) +
                                " columns, found " + std::to_string(fields.size()));
        seen_data = true;
        if (columns == 2) {
            if (!vals[0]) throw parse_failure("line " + std::to_string(lineno) + ": missing design value");
            t.push_back(*vals[0]);
        }
        const auto& yv = vals.back();
        if (!yv || std::isnan(*yv)) {
            if (!interpolate_missing)
                throw precondition_error("line " + std::to_string(lineno) +
                                         ": missing value (use --interpolate-missing to fill)");
            ++missing;
            y.push_back(std::numeric_limits<double>::quiet_NaN());
        } else {
            if (!std::isfinite(*yv))
                throw precondition_error("line " + std::to_string(lineno) + ": non-finite value");
            y.push_back(*yv);
        }
        lines.push_back(lineno);
    }
    if (y.empty()) throw parse_failure("no data rows");
    if (missing > 0) fill_missing(y, lines);

    DataFile d;
    d.has_design = columns == 2;
    d.interpolated = missing;
    d.y = Eigen::Map<Eigen::VectorXd>(y.data(), static_cast<Eigen::Index>(y.size()));
    const int n = d.n();
    if (d.has_design) {
        d.t = Eigen::Map<Eigen::VectorXd>(t.data(), static_cast<Eigen::Index>(t.size()));
        if (n >= 2) {
            const double h = (d.t(n - 1) - d.t(0)) / (n - 1);
            detail::require(h > 0.0, "design column must be strictly increasing");
            for (int i = 0; i < n; ++i) {
                detail::require(i == 0 || d.t(i) > d.t(i - 1), "design column must be strictly increasing");
                detail::require(std::abs(d.t(i) - d.t(0) - i * h) <= 1e-6 * h,
                                "design column is not equidistant at row " + std::to_string(i + 1));
            }
        }
    } else {
        d.t = n >= 2 ? uniform_grid(n) : Eigen::VectorXd::Zero(n);
    }
    return d;
}

DataFile read_data(const fs::path& path, bool interpolate_missing)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw parse_failure("cannot read " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_data(ss.str(), interpolate_missing);
}

namespace {

json to_json_vec(const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

Eigen::VectorXd vec_from_json(const json& j)
{
    auto v = j.get<std::vector<double>>();
    return Eigen::Map<Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

json config_json(const FitConfig& c)
{
    json j;
    j["q_set"] = c.q_set;
    j["delta"] = c.delta;
    j["p"] = c.p;
    j["lambda_grid"] = {{"min", c.lambda_grid.min}, {"max", c.lambda_grid.max}, {"points", c.lambda_grid.points}};
    j["max_iter"] = c.max_iter;
    j["tol_lambda"] = c.tol_lambda;
    j["tol_rho"] = c.tol_rho;
    j["damping"] = c.damping;
    return j;
}

FitConfig config_from_json(const json& j)
{
    FitConfig c;
    c.q_set = j.at("q_set").get<std::vector<int>>();
    c.delta = j.at("delta").get<double>();
    c.p = j.at("p").get<int>();
    c.lambda_grid.min = j.at("lambda_grid").at("min").get<double>();
    c.lambda_grid.max = j.at("lambda_grid").at("max").get<double>();
    c.lambda_grid.points = j.at("lambda_grid").at("points").get<int>();
    c.max_iter = j.at("max_iter").get<int>();
    c.tol_lambda = j.at("tol_lambda").get<double>();
    c.tol_rho = j.at("tol_rho").get<double>();
    c.damping = j.at("damping").get<double>();
    return c;
}

json meta_json(const std::string& command, const json& settings, std::uint64_t seed)
{
    return {{"tool", "ebsc"},
            {"version", version},
            {"command", command},
            {"config_hash", hex(fnv1a(settings.dump()))},
            {"seed", seed}};
}

std::string header_line(const json& meta)
{
    return "# ebsc " + std::string(version) + " config=" + meta.at("config_hash").get<std::string>() +
           " seed=" + std::to_string(meta.at("seed").get<std::uint64_t>()) + "\n";
}

void write_file(const fs::path& p, const std::string& content)
{
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + p.string());
    out << content;
    if (!out) throw std::runtime_error("failed writing " + p.string());
}

struct Table {
    std::string text;
    explicit Table(const std::string& header, const std::string& columns) : text(header + columns + "\n") {}
    void row(std::initializer_list<std::string> cells)
    {
        bool first = true;
        for (const auto& c : cells) {
            if (!first) text += ',';
            text += c;
            first = false;
        }
        text += '\n';
    }
};

std::string fmt(double v) { return format_number(v); }

std::uint64_t resolve_seed(const std::optional<std::uint64_t>& flag)
{
    if (flag) return *flag;
    if (const char* env = std::getenv("EBSC_SEED")) {
        std::uint64_t v = 0;
        const std::string s(env);
        auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
        if (ec != std::errc() || p != s.data() + s.size()) throw parse_failure("EBSC_SEED is not an unsigned integer");
        return v;
    }
    return 1;
}

struct FitFlags {
    std::optional<int> fixed_q;
    int q_max = max_order;
    double delta = default_delta;
    double lambda_min = 0.0;
    double lambda_max = 0.0;
    int lambda_points = 101;
    double tol_lambda = 1e-3;
    double tol_rho = 1e-4;
    int max_iter = 50;
    double alpha = 0.05;
    double L = 1.0;
    int draws = 2000;
    std::optional<std::uint64_t> seed;
    int threads = 0;
    bool strict = false;
    bool interpolate = false;
    std::string out_dir = ".";
    std::string input;
};

void add_config_flags(CLI::App* c, FitFlags& f)
{
    c->add_option("--fixed-q", f.fixed_q, "fix the penalty order instead of estimating it");
    c->add_option("--q-max", f.q_max, "largest order considered when estimating q");
    c->add_option("--delta", f.delta, "spectral truncation level");
    c->add_option("--lambda-min", f.lambda_min, "smallest lambda on the search grid (default: order-scaled)");
    c->add_option("--lambda-max", f.lambda_max, "largest lambda on the search grid (default: order-scaled)");
    c->add_option("--lambda-points", f.lambda_points, "number of grid points");
    c->add_option("--tol-lambda", f.tol_lambda, "relative lambda change for convergence");
    c->add_option("--tol-rho", f.tol_rho, "scaled spectral change for convergence");
    c->add_option("--max-iter", f.max_iter, "iteration cap per order");
    c->add_option("--threads", f.threads, "worker threads");
    c->add_option("--seed", f.seed, "random seed (falls back to EBSC_SEED)");
    c->add_flag("--strict", f.strict, "exit 4 when the fit carries diagnostic flags");
    c->add_option("--out-dir", f.out_dir, "output directory");
}

FitConfig make_config(const FitFlags& f)
{
    FitConfig c;
    if (f.fixed_q) {
        c.q_set = {*f.fixed_q};
    } else {
        detail::require(f.q_max >= min_order && f.q_max <= max_order, "--q-max must lie in [1, 6]");
        c.q_set.clear();
        for (int q = 1; q <= f.q_max; ++q) c.q_set.push_back(q);
    }
    c.delta = f.delta;
    c.lambda_grid = {f.lambda_min, f.lambda_max, f.lambda_points};
    c.tol_lambda = f.tol_lambda;
    c.tol_rho = f.tol_rho;
    c.max_iter = f.max_iter;
    return c;
}

int cmd_fit(const FitFlags& f)
{
    const std::uint64_t seed = resolve_seed(f.seed);
    const DataFile data = read_data(f.input, f.interpolate);
    const FitConfig config = make_config(f);
    const FitResult r = f.fixed_q ? fit_fixed_q(data.y, *f.fixed_q, config) : fit(data.y, config);
    const DRBasis& basis = default_basis_cache().get(r.n, r.q_hat);
    const CredibleSet band = credible_set(r, basis, f.alpha, f.L, f.draws, seed);

    json settings = {{"config", config_json(config)}, {"alpha", f.alpha}, {"L", f.L}, {"draws", f.draws},
                     {"fixed_q", f.fixed_q ? json(*f.fixed_q) : json(nullptr)}};
    json meta = meta_json("fit", settings, seed);
    meta["interpolated"] = data.interpolated;
    std::vector<std::string> flags = r.flags;
    if (data.interpolated > 0) flags.push_back("interpolated-missing=" + std::to_string(data.interpolated));

    json j;
    j["meta"] = meta;
    j["config"] = config_json(config);
    j["n"] = r.n;
    j["t"] = to_json_vec(data.t);
    j["y"] = to_json_vec(data.y);
    j["fhat"] = to_json_vec(r.fhat);
    j["lambda_hat"] = r.lambda_hat;
    j["q_hat"] = r.q_hat;
    j["sigma2hat"] = r.sigma2hat;
    j["edf"] = r.edf;
    j["rho_hat"] = to_json_vec(r.rho_hat.rho);
    j["r_hat"] = to_json_vec(r.r_hat);
    j["delta"] = r.rho_hat.delta;
    json per_q = json::array();
    for (const auto& [q, o] : r.per_q)
        per_q.push_back({{"q", q},
                         {"lambda", o.lambda},
                         {"t_q", o.t_q},
                         {"sigma2hat", o.sigma2hat},
                         {"iterations", o.iterations},
                         {"converged", o.converged},
                         {"root_found", o.root_found}});
    j["per_q"] = per_q;
    j["flags"] = flags;
    j["band"] = {{"alpha", f.alpha}, {"L", f.L}, {"draws", f.draws}, {"radius", band.radius}, {"s_n", band.s_n}};

    fs::create_directories(f.out_dir);
    const fs::path out(f.out_dir);
    write_file(out / "fit.json", j.dump(2) + "\n");
    const std::string head = header_line(meta);
    Table curve(head, "t,y,fhat,band_lo,band_hi");
    for (int i = 0; i < r.n; ++i)
        curve.row({fmt(data.t(i)), fmt(data.y(i)), fmt(r.fhat(i)), fmt(band.lower(i)), fmt(band.upper(i))});
    write_file(out / "curve.csv", curve.text);
    Table spec(head, "t,rho_hat");
    const Eigen::VectorXd grid = uniform_grid(r.n);
    for (int i = 0; i < r.n; ++i) spec.row({fmt(grid(i)), fmt(r.rho_hat.rho(i))});
    write_file(out / "spectrum.csv", spec.text);
    Table ac(head, "lag,r_hat");
    for (int k = 0; k < r.n; ++k) ac.row({std::to_string(k), fmt(r.r_hat(k))});
    write_file(out / "autocorr.csv", ac.text);
    Table tq(head, "q,t_q");
    for (const auto& [q, o] : r.per_q) tq.row({std::to_string(q), fmt(o.t_q)});
    write_file(out / "tq.csv", tq.text);

    std::cout << "q_hat=" << r.q_hat << " lambda_hat=" << fmt(r.lambda_hat) << " sigma2hat=" << fmt(r.sigma2hat)
              << " edf=" << fmt(r.edf) << "\n";
    for (const auto& fl : flags) std::cerr << "flag: " << fl << "\n";
    if (f.strict && !r.flags.empty()) return strict_escalation;
    return ok;
}

FitResult fit_from_json(const json& j)
{
    FitResult r;
    r.n = j.at("n").get<int>();
    r.y = vec_from_json(j.at("y"));
    r.fhat = vec_from_json(j.at("fhat"));
    r.lambda_hat = j.at("lambda_hat").get<double>();
    r.q_hat = j.at("q_hat").get<int>();
    r.sigma2hat = j.at("sigma2hat").get<double>();
    r.edf = j.at("edf").get<double>();
    r.rho_hat.rho = vec_from_json(j.at("rho_hat"));
    r.rho_hat.delta = j.at("delta").get<double>();
    r.r_hat = vec_from_json(j.at("r_hat"));
    r.rho_hat.r = r.r_hat;
    const auto n = static_cast<Eigen::Index>(r.n);
    if (r.y.size() != n || r.fhat.size() != n || r.rho_hat.rho.size() != n || r.r_hat.size() != n)
        throw parse_failure("fit.json vectors do not match n");
    if (!(r.sigma2hat > 0.0) || !(r.lambda_hat > 0.0)) throw parse_failure("fit.json has invalid lambda or sigma2hat");
    if (r.q_hat < min_order || r.q_hat > max_order) throw parse_failure("fit.json has invalid q_hat");
    return r;
}

struct CredibleFlags {
    std::string input;
    double alpha = 0.05;
    double L = 1.0;
    int draws = 20000;
    std::optional<std::uint64_t> seed;
    std::string mode = "spectral";
    std::string out_dir = ".";
};

int cmd_credible(const CredibleFlags& f)
{
    const std::uint64_t seed = resolve_seed(f.seed);
    json j;
    {
        std::ifstream in(f.input, std::ios::binary);
        if (!in) throw parse_failure("cannot read " + f.input);
        try {
            j = json::parse(in);
        } catch (const json::exception& e) {
            throw parse_failure(std::string("malformed fit.json: ") + e.what());
        }
    }
    FitResult r;
    Eigen::VectorXd t;
    try {
        r = fit_from_json(j);
        t = j.contains("t") ? vec_from_json(j.at("t")) : uniform_grid(r.n);
    } catch (const json::exception& e) {
        throw parse_failure(std::string("malformed fit.json: ") + e.what());
    }
    if (t.size() != r.n) throw parse_failure("fit.json design length does not match n");
    CovarianceMode mode;
    if (f.mode == "spectral") mode = CovarianceMode::spectral;
    else if (f.mode == "toeplitz") mode = CovarianceMode::toeplitz;
    else throw parse_failure("unknown --mode '" + f.mode + "'");
    const DRBasis& basis = default_basis_cache().get(r.n, r.q_hat);
    const CredibleSet cs = credible_set(r, basis, f.alpha, f.L, f.draws, seed, {mode, false, 256});

    json settings = {{"alpha", f.alpha}, {"L", f.L}, {"draws", f.draws}, {"mode", f.mode},
                     {"fit", j.contains("meta") ? j["meta"].value("config_hash", "") : ""}};
    const json meta = meta_json("credible", settings, seed);
    json out = {{"meta", meta},   {"alpha", f.alpha},      {"L", f.L},          {"mode", f.mode},
                {"s_n", cs.s_n},  {"radius", cs.radius},   {"num_draws", cs.num_draws},
                {"retained", cs.retained}};
    fs::create_directories(f.out_dir);
    const fs::path dir(f.out_dir);
    write_file(dir / "credible.json", out.dump(2) + "\n");
    Table bands(header_line(meta), "t,fhat,lower,upper");
    for (int i = 0; i < r.n; ++i) bands.row({fmt(t(i)), fmt(r.fhat(i)), fmt(cs.lower(i)), fmt(cs.upper(i))});
    write_file(dir / "bands.csv", bands.text);
    std::cout << "retained=" << cs.retained << " radius=" << fmt(cs.radius) << " s_n=" << fmt(cs.s_n) << "\n";
    return ok;
}

NoiseSpec parse_noise(const std::string& s, double sigma)
{
    NoiseSpec n;
    n.sigma = sigma;
    const auto colon = s.find(':');
    try {
        n.kind = noise_kind_from_string(s.substr(0, colon));
    } catch (const precondition_error& e) {
        throw parse_failure(e.what());
    }
    if (colon != std::string::npos) {
        std::string rest = s.substr(colon + 1);
        std::stringstream ss(rest);
        std::string tok;
        while (std::getline(ss, tok, ',')) {
            auto v = parse_double(tok);
            if (!v) throw parse_failure("bad noise parameter '" + tok + "' in '" + s + "'");
            n.params.push_back(*v);
        }
    }
    return n;
}

std::string noise_label(const NoiseSpec& n)
{
    std::string s = to_string(n.kind);
    for (std::size_t i = 0; i < n.params.size(); ++i) s += (i == 0 ? ":" : ";") + fmt(n.params[i]);
    return s;
}

struct SimulateFlags {
    std::string function = "f1";
    std::string noise = "iid";
    int n = 500;
    int M = 50;
    bool full_scale = false;
    std::optional<int> fixed_q;
    double sigma = default_sigma;
    std::optional<std::uint64_t> seed;
    int threads = 0;
    std::string out_dir = ".";
};

int cmd_simulate(const SimulateFlags& f)
{
    const std::uint64_t seed = resolve_seed(f.seed);
    TestFunction fn;
    try {
        fn = test_function_from_string(f.function);
    } catch (const precondition_error& e) {
        throw parse_failure(e.what());
    }
    std::vector<NoiseSpec> noises;
    if (f.noise == "all") {
        for (const char* s : {"iid", "ar1:-0.9", "ar1:-0.5", "ar1:0.5", "ar1:0.9", "ma1:-0.5", "ma1:0.5", "arma22", "gp"})
            noises.push_back(parse_noise(s, f.sigma));
    } else {
        noises.push_back(parse_noise(f.noise, f.sigma));
    }
    const int M = f.full_scale ? 500 : f.M;
    json settings = {{"function", f.function}, {"noise", f.noise}, {"n", f.n}, {"M", M},
                     {"fixed_q", f.fixed_q ? json(*f.fixed_q) : json(nullptr)}, {"sigma", f.sigma}};
    const json meta = meta_json("simulate", settings, seed);
    Table table(header_line(meta),
                "function,noise,n,M,q_mode,A_f_x1e3,A_R_x1e3,q_recovery,not_converged,no_root,noise_projected");
    json results = json::array();
    for (const auto& noise : noises) {
        ScenarioSpec spec;
        spec.function = fn;
        spec.noise = noise;
        spec.n = f.n;
        spec.M = M;
        spec.fixed_q = f.fixed_q;
        spec.seed = seed;
        spec.threads = f.threads;
        const ScenarioResult r = run_scenario(spec);
        int nc = 0, nr = 0;
        json reps = json::array();
        for (const auto& rep : r.replications) {
            nc += !rep.converged;
            nr += !rep.root_found;
            reps.push_back({{"err_f", rep.err_f},
                            {"err_r", rep.err_r},
                            {"lambda_hat", rep.lambda_hat},
                            {"q_hat", rep.q_hat},
                            {"sigma2hat", rep.sigma2hat},
                            {"converged", rep.converged}});
        }
        const std::string qmode = f.fixed_q ? "fixed:" + std::to_string(*f.fixed_q) : "adaptive";
        table.row({f.function, noise_label(noise), std::to_string(f.n), std::to_string(M), qmode, fmt(r.A_f * 1e3),
                   fmt(r.A_R * 1e3), f.fixed_q ? "" : fmt(r.q_recovery), std::to_string(nc), std::to_string(nr),
                   r.noise_projected ? "1" : "0"});
        results.push_back({{"function", f.function},
                           {"noise", noise_label(noise)},
                           {"n", f.n},
                           {"M", M},
                           {"q_mode", qmode},
                           {"A_f", r.A_f},
                           {"A_R", r.A_R},
                           {"q_recovery", f.fixed_q ? json(nullptr) : json(r.q_recovery)},
                           {"not_converged", nc},
                           {"no_root", nr},
                           {"noise_projected", r.noise_projected},
                           {"clipped_eigenvalues", r.clipped_eigenvalues},
                           {"replications", reps}});
        std::cout << f.function << " " << noise_label(noise) << " A_f=" << fmt(r.A_f) << " A_R=" << fmt(r.A_R);
        if (!f.fixed_q) std::cout << " q_recovery=" << fmt(r.q_recovery);
        if (nc > 0) std::cout << " slow-convergence=" << nc;
        std::cout << "\n";
    }
    fs::create_directories(f.out_dir);
    const fs::path dir(f.out_dir);
    write_file(dir / "table1_row.csv", table.text);
    write_file(dir / "result.json", json({{"meta", meta}, {"scenarios", results}}).dump(2) + "\n");
    return ok;
}

} // namespace

int run(const std::vector<std::string>& args)
{
    CLI::App app{"Empirical-Bayes smoothing splines with correlated noise", "ebsc"};
    app.require_subcommand(1);
    app.set_version_flag("--version", version);

    FitFlags ff;
    auto* fitc = app.add_subcommand("fit", "fit a curve to a data file");
    fitc->add_option("input", ff.input, "data file: y, or t,y per line")->required();
    add_config_flags(fitc, ff);
    fitc->add_option("--alpha", ff.alpha, "credible level of the bands");
    fitc->add_option("--L", ff.L, "credible-set multiplier");
    fitc->add_option("--draws", ff.draws, "posterior draws for the bands");
    fitc->add_flag("--interpolate-missing", ff.interpolate, "fill missing values by linear interpolation");

    CredibleFlags cf;
    auto* credc = app.add_subcommand("credible", "credible set and bands from a fit.json");
    credc->add_option("input", cf.input, "fit.json written by `fit`")->required();
    credc->add_option("--alpha", cf.alpha, "credible level");
    credc->add_option("--L", cf.L, "radius multiplier");
    credc->add_option("--draws", cf.draws, "posterior draws");
    credc->add_option("--seed", cf.seed, "random seed (falls back to EBSC_SEED)");
    credc->add_option("--mode", cf.mode, "spectral or toeplitz posterior covariance");
    credc->add_option("--out-dir", cf.out_dir, "output directory");

    SimulateFlags sf;
    auto* simc = app.add_subcommand("simulate", "Monte-Carlo study of the estimator");
    simc->add_option("--f", sf.function, "test function: f1, f2 or f3");
    simc->add_option("--noise", sf.noise, "iid | ar1:phi | ma1:theta | arma22[:p1,p2,t1,t2] | gp[:omega,len,floor] | all");
    simc->add_option("--n", sf.n, "series length");
    simc->add_option("--M", sf.M, "replications");
    simc->add_flag("--full-scale", sf.full_scale, "use M = 500");
    simc->add_option("--fixed-q", sf.fixed_q, "fix the order (default: estimate it)");
    simc->add_option("--sigma", sf.sigma, "noise standard deviation");
    simc->add_option("--seed", sf.seed, "random seed (falls back to EBSC_SEED)");
    simc->add_option("--threads", sf.threads, "worker threads");
    simc->add_option("--out-dir", sf.out_dir, "output directory");

    std::vector<std::string> rev(args.rbegin(), args.rend() - (args.empty() ? 0 : 1));
    try {
        app.parse(rev);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? ok : parse_error;
    }
    try {
        if (fitc->parsed()) return cmd_fit(ff);
        if (credc->parsed()) return cmd_credible(cf);
        if (simc->parsed()) return cmd_simulate(sf);
    } catch (const parse_failure& e) {
        std::cerr << "ebsc: parse error: " << e.what() << "\n";
        return parse_error;
    } catch (const precondition_error& e) {
        std::cerr << "ebsc: invalid input: " << e.what() << "\n";
        return precondition;
    } catch (const std::exception& e) {
        std::cerr << "ebsc: " << e.what() << "\n";
        return failure;
    }
    return failure;
}

} // namespace ebsc::cli
