// Command-line front end: `spinosc <mode> [--config FILE] [--KEY VALUE ...]`.

#include <CLI11.hpp>

#include <cstdlib>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "spinosc/spinosc.hpp"

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitNumerical = 3;
constexpr int kExitIo = 4;

struct Invocation {
    std::string config_path;
    std::map<std::string, std::string> flags;
    std::vector<std::string> sets;
    bool dry_run{false};
};

void add_run_options(CLI::App* sub, Invocation& inv) {
    sub->add_option("-c,--config", inv.config_path, "key=value configuration file");
    sub->add_option("--set", inv.sets, "override any key, as key=value (repeatable)");
    sub->add_flag("--dry-run", inv.dry_run, "print the resolved configuration and exit");
    for (const auto& key : spinosc::config_keys()) {
        if (key == "mode") continue;
        sub->add_option_function<std::string>("--" + key, [&inv, key](const std::string& v) { inv.flags[key] = v; },
                                              "override " + key);
    }
}

std::vector<spinosc::ConfigEntry> collect_entries(const Invocation& inv, const std::string& mode) {
    std::vector<spinosc::ConfigEntry> entries;
    if (!inv.config_path.empty()) {
        entries = spinosc::parse_entries(spinosc::io::read_text(inv.config_path));
    }
    if (const char* env = std::getenv("SPINOSC_OUTPUT_DIR"); env && *env) {
        entries.push_back({"output_dir", env, 0});
    }
    for (const auto& s : inv.sets) {
        const auto eq = s.find('=');
        if (eq == std::string::npos) throw spinosc::ConfigError("--set expects key=value, got '" + s + "'");
        const auto one = spinosc::parse_entries(s);
        entries.insert(entries.end(), one.begin(), one.end());
        entries.back().line = 0;
    }
    for (const auto& [k, v] : inv.flags) entries.push_back({k, v, 0});
    entries.push_back({"mode", mode, 0});
    return entries;
}

std::string describe(const spinosc::ConfigError& e, const std::string& path) {
    std::string where = e.line() > 0 && !path.empty() ? " in " + path : std::string();
    return "configuration error" + where + ": " + e.what();
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Continuous position measurement of a spin in a trapped gradient field"};
    app.require_subcommand(1);
    Invocation inv;
    const std::vector<std::pair<std::string, std::string>> modes{
        {"sse", "measured quantum trajectories"},
        {"classical", "classical orbit with spin precession"},
        {"cumulant", "Gaussian moment closure"},
        {"ensemble", "trajectory ensemble statistics and closure comparison"},
        {"compare", "quantum trajectories next to the classical orbit"}};
    for (const auto& [name, help] : modes) add_run_options(app.add_subcommand(name, help), inv);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : kExitConfig;
    }
    const std::string mode = app.get_subcommands().front()->get_name();

    spinosc::RunConfig cfg;
    try {
        cfg = spinosc::resolve_config(collect_entries(inv, mode));
    } catch (const spinosc::ConfigError& e) {
        std::cerr << describe(e, inv.config_path) << '\n';
        return kExitConfig;
    } catch (const spinosc::IoError& e) {
        std::cerr << "I/O error: " << e.what() << '\n';
        return kExitIo;
    }
    if (inv.dry_run) {
        std::cout << spinosc::to_text(cfg);
        return 0;
    }
    if (cfg.long_running) std::cerr << "note: preset '" << cfg.preset << "' is long-running\n";

    try {
        const spinosc::RunOutcome out = spinosc::run(cfg);
        for (const auto& f : out.files) std::cout << f.string() << '\n';
        if (out.failure) {
            std::cerr << "numerical failure in " << out.failed_trajectories
                      << " trajectory(ies); partial outputs written. First: " << *out.failure << '\n';
            return kExitNumerical;
        }
    } catch (const spinosc::ConfigError& e) {
        std::cerr << describe(e, "") << '\n';
        return kExitConfig;
    } catch (const spinosc::NumericalError& e) {
        std::cerr << "numerical failure: " << e.what() << '\n';
        return kExitNumerical;
    } catch (const spinosc::IoError& e) {
        std::cerr << "I/O error: " << e.what() << '\n';
        return kExitIo;
    }
    return 0;
}
