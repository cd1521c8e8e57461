#pragma once

#include <functional>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "seqseg/cli/commands.hpp"

namespace seqseg::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitConfig = 2;

inline void report_error(std::ostream& err, const char* kind, const std::string& message) {
  err << json{{"error", kind}, {"message", message}}.dump() << "\n";
}

/// Parses `args` (without the program name), runs one command and returns its exit code.
/// Failures print one JSON line to `err`: exit 2 for configuration errors, 1 otherwise.
inline int run(const std::vector<std::string>& args, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  using Command = std::function<void(const RunConfig&, std::ostream&)>;
  const std::vector<std::pair<std::string, Command>> commands{
      {"gen-data", cmd_gen_data}, {"train", cmd_train}, {"eval", cmd_eval}, {"predict", cmd_predict}, {"analyze", cmd_analyze}};
  const std::map<std::string, std::string> about{
      {"gen-data", "generate a synthetic shapes dataset"},
      {"train", "train a model"},
      {"eval", "AP, SBD and DiC of a checkpoint on a dataset split"},
      {"predict", "per-step masks and a numbered overlay for one image"},
      {"analyze", "ordering, error and activation analysis with plots"}};

  CLI::App app{"Recurrent instance segmentation"};
  app.name("seqseg");
  app.require_subcommand(1, 1);
  std::map<std::string, std::string> config_path;
  std::map<std::string, std::map<std::string, std::string>> raw;
  std::map<std::string, std::map<std::string, CLI::Option*>> given;
  for (const auto& [name, fn] : commands) {
    CLI::App* sub = app.add_subcommand(name, about.at(name));
    sub->add_option("--config", config_path[name], "JSON file of option values; flags take precedence");
    for (const OptionSpec* spec : options_for(name)) {
      CLI::Option* opt = nullptr;
      if (spec->kind == Kind::flag) {
        opt = sub->add_flag("--" + spec->key, spec->help);
      } else {
        std::string help = spec->help;
        if (!spec->fallback.is_null()) help += " (default " + spec->fallback.dump() + ")";
        opt = sub->add_option("--" + spec->key, raw[name][spec->key], help);
      }
      if (spec->hidden) opt->group("");
      given[name][spec->key] = opt;
    }
  }

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::Success& e) {
    app.exit(e, out, err);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    report_error(err, "ConfigError", e.what());
    return kExitConfig;
  }

  for (const auto& [name, fn] : commands) {
    if (!app.got_subcommand(name)) continue;
    try {
      std::map<std::string, std::string> flags;
      for (const auto& [key, opt] : given[name]) {
        if (opt->count() == 0) continue;
        const auto it = raw[name].find(key);
        flags[key] = it == raw[name].end() ? "true" : it->second;  // only flags lack a text slot
      }
      const json file = config_path[name].empty() ? json::object() : read_config_file(config_path[name]);
      const RunConfig rc = resolve(name, file, flags);
      fn(rc, out);
      return kExitOk;
    } catch (const ConfigError& e) {
      report_error(err, "ConfigError", e.what());
      return kExitConfig;
    } catch (const IoError& e) {
      report_error(err, "IoError", e.what());
    } catch (const ShapeError& e) {
      report_error(err, "ShapeError", e.what());
    } catch (const TrainingError& e) {
      report_error(err, "TrainingError", e.what());
    } catch (const GenerationError& e) {
      report_error(err, "GenerationError", e.what());
    } catch (const std::exception& e) {
      report_error(err, "Error", e.what());
    }
    return kExitRuntime;
  }
  return kExitConfig;
}

inline int run(int argc, char** argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  return run(std::vector<std::string>(argv + 1, argv + argc), out, err);
}

}  // namespace seqseg::cli
