#include <cstdio>
#include <iostream>
#include <string>
#include <utility>
#include <vector>

#include <CLI11.hpp>

#include "cbrsubg.h"

namespace {

int exit_code(cbrsubg_status s) {
    switch (s) {
    case CBRSUBG_OK: return 0;
    case CBRSUBG_INVALID_ARGUMENT:
    case CBRSUBG_IO:
    case CBRSUBG_FORMAT: return 2;
    default: return 1;
    }
}

int report(cbrsubg_status s) {
    if (s != CBRSUBG_OK) std::cerr << "error: " << cbrsubg_last_error() << "\n";
    return exit_code(s);
}

// Turns leftover "--key value" / "--key=value" tokens into config overrides.
bool parse_overrides(const std::vector<std::string>& extras, std::vector<std::pair<std::string, std::string>>& out) {
    for (std::size_t i = 0; i < extras.size(); ++i) {
        const std::string& tok = extras[i];
        if (tok.rfind("--", 0) != 0 || tok.size() <= 2) {
            std::cerr << "error: unexpected argument '" << tok << "'\n";
            return false;
        }
        const std::string body = tok.substr(2);
        const auto eq = body.find('=');
        if (eq != std::string::npos) {
            out.emplace_back(body.substr(0, eq), body.substr(eq + 1));
        } else if (i + 1 < extras.size()) {
            out.emplace_back(body, extras[++i]);
        } else {
            std::cerr << "error: option '" << tok << "' needs a value\n";
            return false;
        }
    }
    return true;
}

struct ConfigGuard {
    cbrsubg_config* cfg = nullptr;
    ~ConfigGuard() { cbrsubg_config_free(cfg); }
};

} // namespace

int main(int argc, char** argv) {
    std::string commands;
    for (std::size_t i = 0; i < cbrsubg_command_count(); ++i) {
        commands += (i ? ", " : "");
        commands += cbrsubg_command_name(i);
    }

    CLI::App app{"Case-based subgraph reasoning over knowledge graphs.\n"
                 "Any config key can be overridden with --key value or --section.key value."};
    app.set_version_flag("--version", std::string(cbrsubg_version()));
    app.allow_extras();

    std::string command;
    std::string config_file;
    std::vector<std::string> sets;
    app.add_option("command", command, "one of: " + commands + ", show-config")->required();
    app.add_option("-c,--config", config_file, "INI config file");
    app.add_option("--set", sets, "key=value override (repeatable)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 2;
    }

    std::vector<std::pair<std::string, std::string>> overrides;
    for (const auto& s : sets) {
        const auto eq = s.find('=');
        if (eq == std::string::npos) {
            std::cerr << "error: --set expects key=value, got '" << s << "'\n";
            return 2;
        }
        overrides.emplace_back(s.substr(0, eq), s.substr(eq + 1));
    }
    if (!parse_overrides(app.remaining(), overrides)) return 2;

    ConfigGuard g;
    if (auto s = cbrsubg_config_new(&g.cfg); s != CBRSUBG_OK) return report(s);
    if (!config_file.empty()) {
        if (auto s = cbrsubg_config_load(g.cfg, config_file.c_str()); s != CBRSUBG_OK) return report(s);
    }
    for (const auto& [k, v] : overrides) {
        if (auto s = cbrsubg_config_set(g.cfg, k.c_str(), v.c_str()); s != CBRSUBG_OK) return report(s);
    }

    if (command == "show-config") {
        std::size_t needed = 0;
        if (auto s = cbrsubg_config_get(g.cfg, nullptr, nullptr, 0, &needed); s != CBRSUBG_OK) return report(s);
        std::string text(needed, '\0');
        cbrsubg_config_get(g.cfg, nullptr, text.data(), text.size(), &needed);
        text.resize(needed - 1);
        std::cout << text;
        return 0;
    }
    return report(cbrsubg_run(g.cfg, command.c_str()));
}
