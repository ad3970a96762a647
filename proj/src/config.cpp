#include "mgam/config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <sstream>
#include <stdexcept>
#include <vector>

#include "mgam/table.hpp"

namespace mgam {

namespace {

[[noreturn]] void fail(const std::string& origin, long line_no, const std::string& what) {
    throw std::invalid_argument(origin + ":" + std::to_string(line_no) + ": " + what);
}

std::string trim(std::string s) {
    const auto b = s.find_first_not_of(" \t");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t");
    return s.substr(b, e - b + 1);
}

std::vector<std::string> split_words(const std::string& s) {
    std::vector<std::string> out;
    std::istringstream in(s);
    std::string w;
    while (in >> w) out.push_back(w);
    return out;
}

double parse_double(const std::string& s, const std::string& origin, long line_no) {
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(v))
        fail(origin, line_no, "'" + s + "' is not a finite number");
    return v;
}

long long parse_int(const std::string& s, const std::string& origin, long line_no) {
    long long v = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size())
        fail(origin, line_no, "'" + s + "' is not an integer");
    return v;
}

std::uint64_t parse_u64(const std::string& s, const std::string& origin, long line_no) {
    std::uint64_t v = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size())
        fail(origin, line_no, "'" + s + "' is not an unsigned integer");
    return v;
}

// `k=10` -> {"k", "10"}; words without '=' are rejected by the caller.
bool split_option(const std::string& w, std::string& key, std::string& value) {
    const auto eq = w.find('=');
    if (eq == std::string::npos || eq == 0) return false;
    key = w.substr(0, eq);
    value = w.substr(eq + 1);
    return true;
}

} // namespace

ModelConfig parse_config(std::istream& in, const std::string& origin) {
    ModelConfig cfg;
    bool family_set = false;
    std::vector<std::string> param_names; // family order, fixed once family is set
    int current = -1;                     // index of the open param block

    std::string raw;
    long line_no = 0;
    while (std::getline(in, raw)) {
        ++line_no;
        if (const auto hash = raw.find('#'); hash != std::string::npos) raw.erase(hash);
        const std::string line = trim(raw);
        if (line.empty()) continue;

        const std::vector<std::string> words = split_words(line);
        const std::string& head = words[0];

        if (head == "param") {
            if (!family_set) fail(origin, line_no, "'param' before 'family'");
            if (words.size() != 2) fail(origin, line_no, "expected 'param <name>'");
            const int next = current + 1;
            if (next >= static_cast<int>(param_names.size()))
                fail(origin, line_no, "too many param blocks for family '" +
                                          std::string(cfg.spec.family.name()) + "'");
            if (words[1] != param_names[next])
                fail(origin, line_no, "expected 'param " + param_names[next] +
                                          "' (family parameter order), got '" + words[1] + "'");
            current = next;
            continue;
        }

        if (head == "smooth" || head == "linear" || head == "offset") {
            if (current < 0) fail(origin, line_no, "'" + head + "' outside a param block");
            ParamTerms& pt = cfg.spec.params[current];
            if (words.size() < 2) fail(origin, line_no, "expected '" + head + " <column>'");
            const std::string& column = words[1];

            if (head == "linear") {
                if (words.size() != 2) fail(origin, line_no, "'linear' takes only a column");
                pt.linear.push_back(column);
                continue;
            }
            if (head == "offset") {
                if (words.size() != 2) fail(origin, line_no, "'offset' takes only a column");
                if (!pt.offset.empty()) fail(origin, line_no, "second offset for this param");
                pt.offset = column;
                continue;
            }

            BasisSpec bs;
            bs.predictor = column;
            for (std::size_t i = 2; i < words.size(); ++i) {
                std::string key, value;
                if (!split_option(words[i], key, value))
                    fail(origin, line_no, "expected option key=value, got '" + words[i] + "'");
                if (key == "k") {
                    bs.K = static_cast<int>(parse_int(value, origin, line_no));
                } else if (key == "kind") {
                    try {
                        bs.kind = parse_basis_kind(value);
                    } catch (const std::exception& e) {
                        fail(origin, line_no, e.what());
                    }
                } else if (key == "period") {
                    bs.period = parse_double(value, origin, line_no);
                } else {
                    fail(origin, line_no, "unknown smooth option '" + key + "'");
                }
            }
            pt.smooths.push_back(std::move(bs));
            continue;
        }

        // Everything else is a `key = value` setting.
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            fail(origin, line_no, "unrecognized directive '" + head + "'");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key.empty() || key.find_first_of(" \t") != std::string::npos)
            fail(origin, line_no, "malformed setting line");
        if (value.empty()) fail(origin, line_no, "empty value for '" + key + "'");

        if (key == "family") {
            if (family_set) fail(origin, line_no, "duplicate 'family'");
            try {
                cfg.spec.family = FamilySpec::parse(value);
            } catch (const std::exception& e) {
                fail(origin, line_no, e.what());
            }
            family_set = true;
            param_names = cfg.spec.family.parameter_names();
            cfg.spec.params.assign(param_names.size(), ParamTerms{});
        } else if (key == "response") {
            cfg.response = value;
        } else if (key == "seed") {
            cfg.seed = parse_u64(value, origin, line_no);
            cfg.has_seed = true;
        } else if (key == "threads") {
            const long long t = parse_int(value, origin, line_no);
            if (t < 0) fail(origin, line_no, "threads must be >= 0");
            cfg.threads = static_cast<int>(t);
            cfg.em.threads = cfg.threads;
        } else if (key == "tol") {
            const double v = parse_double(value, origin, line_no);
            if (v <= 0) fail(origin, line_no, "tol must be positive");
            cfg.em.epsilon_rel = v;
        } else if (key == "pll_tol") {
            const double v = parse_double(value, origin, line_no);
            if (v <= 0) fail(origin, line_no, "pll_tol must be positive");
            cfg.em.pll_tol_rel = v;
        } else if (key == "max_outer") {
            const long long v = parse_int(value, origin, line_no);
            if (v < 1) fail(origin, line_no, "max_outer must be >= 1");
            cfg.em.max_outer = static_cast<int>(v);
        } else if (key == "max_inner") {
            const long long v = parse_int(value, origin, line_no);
            if (v < 1) fail(origin, line_no, "max_inner must be >= 1");
            cfg.em.newton.max_iter = static_cast<int>(v);
        } else if (key == "lambda0") {
            const double v = parse_double(value, origin, line_no);
            if (v <= 0) fail(origin, line_no, "lambda0 must be positive");
            cfg.em.lambda0 = v;
        } else {
            fail(origin, line_no, "unknown setting '" + key + "'");
        }
    }

    if (!family_set) throw std::invalid_argument(origin + ": missing 'family'");
    if (current + 1 != static_cast<int>(param_names.size()))
        throw std::invalid_argument(origin + ": family '" +
                                    std::string(cfg.spec.family.name()) + "' needs " +
                                    std::to_string(param_names.size()) + " param blocks, got " +
                                    std::to_string(current + 1));
    return cfg;
}

ModelConfig read_config(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::invalid_argument("cannot open '" + path + "'");
    return parse_config(in, path);
}

std::string render_model(const ModelSpec& spec, const std::string& response) {
    std::string out;
    out += "family ";
    out += spec.family.name();
    out += "\nresponse " + response + "\n";
    const std::vector<std::string> names = spec.family.parameter_names();
    for (std::size_t d = 0; d < spec.params.size(); ++d) {
        out += "param " + (d < names.size() ? names[d] : std::to_string(d)) + "\n";
        const ParamTerms& pt = spec.params[d];
        for (const BasisSpec& bs : pt.smooths) {
            out += "smooth " + bs.predictor + " k=" + std::to_string(bs.K) +
                   " kind=" + basis_kind_name(bs.kind);
            if (bs.period != 0.0) out += " period=" + format_double(bs.period);
            out += "\n";
        }
        for (const std::string& col : pt.linear) out += "linear " + col + "\n";
        if (!pt.offset.empty()) out += "offset " + pt.offset + "\n";
    }
    return out;
}

std::string model_fingerprint(const ModelSpec& spec, const std::string& response) {
    const std::string text = render_model(spec, response);
    std::uint64_t h = 14695981039346656037ull;
    for (const char c : text) {
        h ^= static_cast<unsigned char>(c);
        h *= 1099511628211ull;
    }
    static const char* hex = "0123456789abcdef";
    std::string out(16, '0');
    for (int i = 15; i >= 0; --i, h >>= 4) out[i] = hex[h & 0xf];
    return out;
}

} // namespace mgam
