// Flat key=value run configuration with named presets.
//
// Physics keys are dimensionless in natural units of the trap:
// lengths in z_g, times in 1/omega, actions in hbar.

#pragma once

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <map>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "spinosc/errors.hpp"
#include "spinosc/params.hpp"
#include "spinosc/sse.hpp"

namespace spinosc {

enum class Mode { sse, classical, cumulant, ensemble, compare };

inline const char* to_string(Mode m) {
    switch (m) {
    case Mode::sse: return "sse";
    case Mode::classical: return "classical";
    case Mode::cumulant: return "cumulant";
    case Mode::ensemble: return "ensemble";
    case Mode::compare: return "compare";
    }
    return "?";
}

struct RunConfig {
    std::string preset{"desk"};
    std::vector<double> J{0.5, 2.0, 10.0};
    std::optional<double> delta_z_over_zg{8.0};
    std::optional<double> b_over_scale;  // b hbar / (m omega^2 z_g)
    double k_zg2_over_omega{0.05};
    double action_over_hbar{50.0};
    std::optional<std::size_t> n_max;    // nullopt = auto
    double dt{2.0 * std::numbers::pi * 1e-3};  // omega dt
    double t_final_periods{8.0};
    Scheme scheme{Scheme::kraus};
    std::uint64_t seed{1};
    std::size_t n_traj{20};
    Mode mode{Mode::compare};
    std::string output_dir{"spinosc-out"};
    std::string output_prefix{"run"};
    long sample_stride{10};
    std::optional<double> entropy_norm;  // nullopt = ln(2J+1)
    unsigned threads{0};                 // 0 = all cores
    bool svg{false};
    bool third_cumulants{false};
    std::vector<double> histogram_times_periods;
    bool long_running{false};

    // Model parameters for one entry of the J list.
    ModelParams params_for(double j) const {
        const double zg = std::sqrt(0.5);
        ModelParams::Inputs in;
        in.J = j;
        in.k = k_zg2_over_omega / (zg * zg);
        in.I_action = action_over_hbar;
        if (delta_z_over_zg) in.delta_z = *delta_z_over_zg * zg;
        if (b_over_scale) in.b = *b_over_scale * zg;
        if (in.b && in.delta_z) {
            // make() accepts both only when consistent; the config layer reports the line.
            in.delta_z = -*b_over_scale * j * zg;
        }
        return ModelParams::make(in);
    }

    double period() const { return 2.0 * std::numbers::pi; }
    double t_final() const { return t_final_periods * period(); }

    SseConfig sse_config() const {
        SseConfig c;
        c.dt = dt;
        c.scheme = scheme;
        c.third_cumulants = third_cumulants;
        for (double tp : histogram_times_periods) c.histogram_steps.push_back(std::llround(tp * period() / dt));
        return c;
    }

    std::size_t n_max_for(const ModelParams& p) const { return n_max ? *n_max : recommended_n_max(p, t_final()); }
};

namespace detail {

inline std::string_view trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

inline double parse_double(std::string_view v, const std::string& key, int line) {
    double out = 0.0;
    const auto* end = v.data() + v.size();
    const auto r = std::from_chars(v.data(), end, out);
    if (r.ec != std::errc{} || r.ptr != end || !std::isfinite(out)) {
        throw ConfigError("cannot parse '" + std::string(v) + "' as a number for key " + key, line);
    }
    return out;
}

template <class Int>
Int parse_int(std::string_view v, const std::string& key, int line) {
    Int out{};
    const auto* end = v.data() + v.size();
    const auto r = std::from_chars(v.data(), end, out);
    if (r.ec != std::errc{} || r.ptr != end) {
        throw ConfigError("cannot parse '" + std::string(v) + "' as an integer for key " + key, line);
    }
    return out;
}

inline std::vector<double> parse_list(std::string_view v, const std::string& key, int line) {
    std::vector<double> out;
    while (true) {
        const auto comma = v.find(',');
        const auto item = trim(v.substr(0, comma));
        if (item.empty()) throw ConfigError("empty list element for key " + key, line);
        out.push_back(parse_double(item, key, line));
        if (comma == std::string_view::npos) break;
        v = v.substr(comma + 1);
    }
    return out;
}

inline bool parse_bool(std::string_view v, const std::string& key, int line) {
    if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
    if (v == "false" || v == "0" || v == "no" || v == "off") return false;
    throw ConfigError("cannot parse '" + std::string(v) + "' as a boolean for key " + key, line);
}

inline std::string format_number(double x) {
    std::array<char, 32> buf{};
    const auto r = std::to_chars(buf.data(), buf.data() + buf.size(), x);
    return std::string(buf.data(), r.ptr);
}

} // namespace detail

struct ConfigEntry {
    std::string key;
    std::string value;
    int line{0};  // 0 for command-line overrides
};

inline const std::vector<std::string>& config_keys() {
    static const std::vector<std::string> keys{
        "preset", "J", "delta_z_over_zg", "b_over_scale", "k_zg2_over_omega", "action_over_hbar", "n_max", "dt",
        "t_final_periods", "scheme", "seed", "n_traj", "mode", "output_dir", "output_prefix", "sample_stride",
        "entropy_norm", "threads", "svg", "third_cumulants", "histogram_times_periods"};
    return keys;
}

inline const std::vector<std::string>& preset_names() {
    static const std::vector<std::string> names{"desk", "paper-fig1", "paper-fig3", "entropy-scaling"};
    return names;
}

inline RunConfig preset_config(const std::string& name, int line = 0) {
    RunConfig c;
    c.preset = name;
    if (name == "desk") return c;
    if (name == "paper-fig1") {
        c.J = {0.5, 5.0, 25.0};
        c.delta_z_over_zg = 22.0;
        c.action_over_hbar = 1000.0;
        c.k_zg2_over_omega = 0.05;
        c.mode = Mode::compare;
        c.n_traj = 1;
        c.long_running = true;
        return c;
    }
    if (name == "paper-fig3") {
        c.J = {5.0, 25.0};
        c.delta_z_over_zg = 22.0;
        c.action_over_hbar = 1000.0;
        c.k_zg2_over_omega = 0.05;
        c.mode = Mode::cumulant;
        c.n_traj = 1;
        c.long_running = true;
        return c;
    }
    if (name == "entropy-scaling") {
        c.J = {2.0, 4.0, 8.0, 16.0};
        c.n_traj = 10;
        c.t_final_periods = 4.0;
        c.mode = Mode::ensemble;
        return c;
    }
    throw ConfigError("unknown preset '" + name + "'", line);
}

inline Mode parse_mode(std::string_view v, int line) {
    for (Mode m : {Mode::sse, Mode::classical, Mode::cumulant, Mode::ensemble, Mode::compare}) {
        if (v == to_string(m)) return m;
    }
    throw ConfigError("unknown mode '" + std::string(v) + "'", line);
}

// Splits text into entries. Rejects lines without '=', empty keys or values,
// unknown keys and keys repeated within the same text.
inline std::vector<ConfigEntry> parse_entries(std::string_view text) {
    std::vector<ConfigEntry> out;
    std::map<std::string, int> seen;
    int line_no = 0;
    while (!text.empty()) {
        ++line_no;
        const auto nl = text.find('\n');
        std::string_view line = text.substr(0, nl);
        text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
        if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
        line = detail::trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string_view::npos) throw ConfigError("expected key=value", line_no);
        const std::string key(detail::trim(line.substr(0, eq)));
        const std::string value(detail::trim(line.substr(eq + 1)));
        if (key.empty()) throw ConfigError("missing key before '='", line_no);
        if (std::find(config_keys().begin(), config_keys().end(), key) == config_keys().end()) {
            throw ConfigError("unknown key '" + key + "'", line_no);
        }
        if (value.empty()) throw ConfigError("missing value for key " + key, line_no);
        if (const auto it = seen.find(key); it != seen.end()) {
            throw ConfigError("key " + key + " repeats line " + std::to_string(it->second), line_no);
        }
        seen[key] = line_no;
        out.push_back({key, value, line_no});
    }
    return out;
}

inline void apply_entry(RunConfig& c, const ConfigEntry& e) {
    const std::string& k = e.key;
    const std::string_view v = e.value;
    const int ln = e.line;
    if (k == "preset") {
        // applied by resolve_config before any other key
    } else if (k == "J") {
        c.J = detail::parse_list(v, k, ln);
        for (double j : c.J) {
            try {
                if (two_j_from(j) < 1) throw ConfigError("J must be at least 1/2");
            } catch (const ConfigError& err) {
                throw ConfigError(err.what(), ln);
            }
        }
    } else if (k == "delta_z_over_zg") {
        c.delta_z_over_zg = detail::parse_double(v, k, ln);
    } else if (k == "b_over_scale") {
        c.b_over_scale = detail::parse_double(v, k, ln);
    } else if (k == "k_zg2_over_omega") {
        c.k_zg2_over_omega = detail::parse_double(v, k, ln);
        if (!(c.k_zg2_over_omega >= 0.0)) throw ConfigError("k_zg2_over_omega must be nonnegative", ln);
    } else if (k == "action_over_hbar") {
        c.action_over_hbar = detail::parse_double(v, k, ln);
        if (!(c.action_over_hbar > 0.0)) throw ConfigError("action_over_hbar must be positive", ln);
    } else if (k == "n_max") {
        if (v == "auto") {
            c.n_max.reset();
        } else {
            c.n_max = detail::parse_int<std::size_t>(v, k, ln);
            if (*c.n_max < 1) throw ConfigError("n_max must be >= 1", ln);
        }
    } else if (k == "dt") {
        c.dt = detail::parse_double(v, k, ln);
        if (!(c.dt > 0.0)) throw ConfigError("dt must be positive", ln);
    } else if (k == "t_final_periods") {
        c.t_final_periods = detail::parse_double(v, k, ln);
        if (!(c.t_final_periods > 0.0)) throw ConfigError("t_final_periods must be positive", ln);
    } else if (k == "scheme") {
        if (v == "kraus") c.scheme = Scheme::kraus;
        else if (v == "milstein") c.scheme = Scheme::milstein;
        else throw ConfigError("unknown scheme '" + e.value + "'", ln);
    } else if (k == "seed") {
        c.seed = detail::parse_int<std::uint64_t>(v, k, ln);
    } else if (k == "n_traj") {
        c.n_traj = detail::parse_int<std::size_t>(v, k, ln);
        if (c.n_traj < 1) throw ConfigError("n_traj must be >= 1", ln);
    } else if (k == "mode") {
        c.mode = parse_mode(v, ln);
    } else if (k == "output_dir") {
        c.output_dir = e.value;
    } else if (k == "output_prefix") {
        if (e.value.find('/') != std::string::npos) throw ConfigError("output_prefix must not contain '/'", ln);
        c.output_prefix = e.value;
    } else if (k == "sample_stride") {
        c.sample_stride = detail::parse_int<long>(v, k, ln);
        if (c.sample_stride < 1) throw ConfigError("sample_stride must be >= 1", ln);
    } else if (k == "entropy_norm") {
        if (v == "auto") {
            c.entropy_norm.reset();
        } else {
            c.entropy_norm = detail::parse_double(v, k, ln);
            if (!(*c.entropy_norm > 0.0)) throw ConfigError("entropy_norm must be positive", ln);
        }
    } else if (k == "threads") {
        c.threads = detail::parse_int<unsigned>(v, k, ln);
    } else if (k == "svg") {
        c.svg = detail::parse_bool(v, k, ln);
    } else if (k == "third_cumulants") {
        c.third_cumulants = detail::parse_bool(v, k, ln);
    } else if (k == "histogram_times_periods") {
        c.histogram_times_periods = v == "none" ? std::vector<double>{} : detail::parse_list(v, k, ln);
        for (double t : c.histogram_times_periods) {
            if (t < 0.0) throw ConfigError("histogram times must be nonnegative", ln);
        }
    } else {
        throw ConfigError("unknown key '" + k + "'", ln);
    }
}

// Builds a config from entries in order: the preset (if any) first, then every
// other key, with later entries overriding earlier ones.
inline RunConfig resolve_config(const std::vector<ConfigEntry>& entries) {
    const ConfigEntry* preset = nullptr;
    for (const auto& e : entries) {
        if (e.key == "preset") preset = &e;
    }
    RunConfig c = preset ? preset_config(preset->value, preset->line) : RunConfig{};
    const ConfigEntry* dz = nullptr;
    const ConfigEntry* b = nullptr;
    for (const auto& e : entries) {
        apply_entry(c, e);
        if (e.key == "delta_z_over_zg") dz = &e;
        if (e.key == "b_over_scale") b = &e;
    }
    if (b && !dz) c.delta_z_over_zg.reset();
    if (b && dz) {
        const int ln = std::max(b->line, dz->line);
        for (double j : c.J) {
            const double implied = -*c.b_over_scale * j;
            if (std::abs(implied - *c.delta_z_over_zg) > 1e-9 * std::max(1.0, std::abs(implied))) {
                throw ConfigError("b_over_scale and delta_z_over_zg are inconsistent for J = " +
                                      detail::format_number(j) + " (delta_z_over_zg = -b_over_scale * J)",
                                  ln);
            }
        }
    }
    if (c.sample_stride * c.dt > c.t_final()) {
        throw ConfigError("sample_stride * dt exceeds the run length", 0);
    }
    return c;
}

inline RunConfig parse_config(std::string_view text) { return resolve_config(parse_entries(text)); }

// Fully resolved configuration as parseable key=value text.
inline std::string to_text(const RunConfig& c) {
    using detail::format_number;
    std::ostringstream os;
    auto list = [](const std::vector<double>& v) {
        std::string s;
        for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + format_number(v[i]);
        return s.empty() ? std::string("none") : s;
    };
    os << "# resolved configuration\n";
    if (c.long_running) os << "# long-running preset: not intended for routine test runs\n";
    os << "preset=" << c.preset << '\n';
    os << "mode=" << to_string(c.mode) << '\n';
    os << "J=" << list(c.J) << '\n';
    if (c.delta_z_over_zg) os << "delta_z_over_zg=" << format_number(*c.delta_z_over_zg) << '\n';
    if (c.b_over_scale) os << "b_over_scale=" << format_number(*c.b_over_scale) << '\n';
    os << "k_zg2_over_omega=" << format_number(c.k_zg2_over_omega) << '\n';
    os << "action_over_hbar=" << format_number(c.action_over_hbar) << '\n';
    os << "n_max=" << (c.n_max ? std::to_string(*c.n_max) : std::string("auto")) << '\n';
    os << "dt=" << format_number(c.dt) << '\n';
    os << "t_final_periods=" << format_number(c.t_final_periods) << '\n';
    os << "scheme=" << to_string(c.scheme) << '\n';
    os << "seed=" << c.seed << '\n';
    os << "n_traj=" << c.n_traj << '\n';
    os << "sample_stride=" << c.sample_stride << '\n';
    os << "entropy_norm=" << (c.entropy_norm ? format_number(*c.entropy_norm) : std::string("auto")) << '\n';
    os << "threads=" << c.threads << '\n';
    os << "svg=" << (c.svg ? "true" : "false") << '\n';
    os << "third_cumulants=" << (c.third_cumulants ? "true" : "false") << '\n';
    os << "histogram_times_periods=" << list(c.histogram_times_periods) << '\n';
    os << "output_dir=" << c.output_dir << '\n';
    os << "output_prefix=" << c.output_prefix << '\n';
    return os.str();
}

} // namespace spinosc
