#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "seqseg/core/errors.hpp"

namespace seqseg::cli {

using nlohmann::json;

enum class Kind { integer, real, seed, text, reals, flag };

/// One option. The config-file key and the flag share the name: key "data-dir" is --data-dir.
struct OptionSpec {
  std::string key;
  Kind kind;
  json fallback;  // null: required
  std::string help;
  std::vector<std::string> commands;
  bool hidden = false;
};

inline const std::vector<OptionSpec>& registry() {
  static const std::vector<std::string> all{"gen-data", "train", "eval", "predict", "analyze"};
  static const std::vector<std::string> infer{"eval", "predict", "analyze"};
  static const std::vector<std::string> model{"eval", "predict", "analyze"};
  static const std::vector<OptionSpec> specs{
      {"out-dir", Kind::text, nullptr, "output directory", all},
      {"data-dir", Kind::text, nullptr, "dataset directory", {"train", "eval", "analyze"}},
      {"seed", Kind::seed, 0, "random seed", {"gen-data", "train", "analyze"}},
      {"checkpoint", Kind::text, "", "model checkpoint", model},
      {"image", Kind::text, nullptr, "input PNG", {"predict"}},
      {"split", Kind::text, "test", "manifest split to use, empty for every record", {"eval", "analyze"}},

      {"images", Kind::integer, 1000, "training images", {"gen-data"}},
      {"val-images", Kind::integer, 100, "validation images", {"gen-data"}},
      {"test-images", Kind::integer, 100, "test images", {"gen-data"}},
      {"height", Kind::integer, 64, "image height", {"gen-data"}},
      {"width", Kind::integer, 64, "image width", {"gen-data"}},
      {"classes", Kind::integer, 3, "number of shape classes", {"gen-data", "train"}},
      {"min-objects", Kind::integer, 1, "fewest objects per image", {"gen-data"}},
      {"max-objects", Kind::integer, 4, "most objects per image", {"gen-data"}},
      {"min-size", Kind::real, 0.2, "smallest shape, fraction of the shorter side", {"gen-data"}},
      {"max-size", Kind::real, 0.45, "largest shape, fraction of the shorter side", {"gen-data"}},
      {"max-overlap", Kind::real, 0.3, "largest pairwise overlap, fraction of the smaller shape", {"gen-data"}},

      {"epochs", Kind::integer, 20, "training epochs", {"train"}},
      {"batch-size", Kind::integer, 8, "images per optimizer step", {"train"}},
      {"learning-rate", Kind::real, 1e-3, "Adam step size", {"train"}},
      {"encoder-blocks", Kind::integer, 5, "encoder blocks n_b", {"train"}},
      {"base-channels", Kind::integer, 8, "channels of the shallowest encoder block", {"train"}},
      {"channel-growth", Kind::integer, 2, "channel multiplier per deeper block", {"train"}},
      {"hidden", Kind::integer, 32, "decoder hidden dimension D", {"train"}},
      {"skip-mode", Kind::text, "concat", "concat, sum, mult or none", {"train"}},
      {"decoder-layers", Kind::integer, 0, "decoder layers, 0 for one per encoder block", {"train"}},
      {"curriculum-start", Kind::integer, 2, "initial objects per image", {"train"}},
      {"curriculum-max", Kind::integer, 0, "cap on objects per image, 0 for none", {"train"}},
      {"patience", Kind::integer, 5, "epochs without improvement before the curriculum advances", {"train"}},
      {"plateau-eps", Kind::real, 1e-3, "relative improvement that resets patience", {"train"}},
      {"checkpoint-every", Kind::integer, 0, "epochs between intermediate checkpoints, 0 for none", {"train"}},
      {"stage-stop", Kind::integer, 1, "first epoch (0-based) with the stop loss", {"train"}},
      {"stage-class", Kind::integer, 2, "first epoch with the class loss", {"train"}},
      {"stage-box", Kind::integer, 3, "first epoch with the box loss", {"train"}},
      {"alpha", Kind::real, 1.0, "box loss weight", {"train"}},
      {"lambda", Kind::real, 1.0, "class loss weight", {"train"}},
      {"gamma", Kind::real, 1.0, "stop loss weight", {"train"}},
      {"train-split", Kind::text, "train", "manifest split to train on", {"train"}},
      {"val-split", Kind::text, "val", "manifest split for validation, empty for none", {"train"}},
      {"resume", Kind::text, "", "training checkpoint to continue from", {"train"}},

      {"stop-threshold", Kind::real, 0.5, "inference halts when the stop score falls below this",
       {"train", "eval", "predict", "analyze"}},
      {"max-steps", Kind::integer, 10, "most predictions per image", {"train", "eval", "predict", "analyze"}},
      {"mask-threshold", Kind::real, 0.5, "soft mask binarization level", infer},
      {"iou-thresholds", Kind::reals, json::array({0.5, 0.75}), "comma-separated AP thresholds", {"eval"}},
      {"overlays", Kind::integer, 4, "numbered overlay images to draw", {"analyze"}},
      {"axis-threshold", Kind::real, 0.15, "fraction of the image a pair must move to count", {"analyze"}},
      {"min-pair-count", Kind::integer, 20, "class pairs seen fewer times are not reported", {"analyze"}},
      {"oracle-predictions", Kind::flag, false, "score the ground truth against itself", {"eval"}, true},
  };
  return specs;
}

inline std::vector<const OptionSpec*> options_for(const std::string& command) {
  std::vector<const OptionSpec*> out;
  for (const auto& s : registry()) {
    if (std::find(s.commands.begin(), s.commands.end(), command) != s.commands.end()) out.push_back(&s);
  }
  return out;
}

namespace detail {

inline json parse_number(const std::string& key, const std::string& text, Kind kind) {
  std::size_t used = 0;
  try {
    json v;
    if (kind == Kind::integer) {
      v = std::stoi(text, &used);
    } else if (kind == Kind::seed) {
      if (!text.empty() && text[0] == '-') throw std::invalid_argument("negative");
      v = static_cast<std::uint64_t>(std::stoull(text, &used));
    } else {
      v = std::stod(text, &used);
    }
    if (used == text.size()) return v;
  } catch (const std::exception&) {
  }
  throw ConfigError("--" + key + ": cannot parse '" + text + "'");
}

}  // namespace detail

/// Converts a flag's text to the option's JSON type.
inline json parse_flag_value(const OptionSpec& spec, const std::string& text) {
  switch (spec.kind) {
    case Kind::text: return text;
    case Kind::flag: return text != "false" && text != "0";
    case Kind::reals: {
      json list = json::array();
      std::stringstream in(text);
      std::string item;
      while (std::getline(in, item, ',')) list.push_back(detail::parse_number(spec.key, item, Kind::real));
      if (list.empty()) throw ConfigError("--" + spec.key + ": empty list");
      return list;
    }
    default: return detail::parse_number(spec.key, text, spec.kind);
  }
}

/// Checks a config-file value against the option's type; a single number is accepted for a list.
inline json check_file_value(const OptionSpec& spec, const json& v) {
  const auto fail = [&](const char* want) -> json {
    throw ConfigError("config key '" + spec.key + "' must be " + want + ", got " + v.dump());
  };
  switch (spec.kind) {
    case Kind::integer: return v.is_number_integer() ? v : fail("an integer");
    case Kind::seed: return v.is_number_unsigned() || (v.is_number_integer() && v.get<long long>() >= 0) ? v : fail("a non-negative integer");
    case Kind::real: return v.is_number() ? v : fail("a number");
    case Kind::text: return v.is_string() ? v : fail("a string");
    case Kind::flag: return v.is_boolean() ? v : fail("true or false");
    case Kind::reals: {
      if (v.is_number()) return json::array({v});
      if (!v.is_array() || v.empty()) return fail("a list of numbers");
      for (const auto& x : v) {
        if (!x.is_number()) return fail("a list of numbers");
      }
      return v;
    }
  }
  return v;
}

/// Resolved options of one command: defaults, overridden by the config file, overridden by flags.
struct RunConfig {
  std::string command;
  json values = json::object();

  const json& at(const std::string& key) const {
    const auto it = values.find(key);
    if (it == values.end()) throw ConfigError("option '" + key + "' does not apply to " + command);
    return *it;
  }
  int integer(const std::string& key) const { return at(key).get<int>(); }
  double real(const std::string& key) const { return at(key).get<double>(); }
  std::uint64_t seed(const std::string& key) const { return at(key).get<std::uint64_t>(); }
  std::string text(const std::string& key) const { return at(key).get<std::string>(); }
  bool flag(const std::string& key) const { return at(key).get<bool>(); }
  std::vector<double> reals(const std::string& key) const { return at(key).get<std::vector<double>>(); }

  /// Snapshot that reproduces the run when passed back through --config.
  json snapshot() const {
    json j = values;
    j["command"] = command;
    return j;
  }
};

inline json read_config_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  try {
    json j = json::parse(in);
    if (!j.is_object()) throw ConfigError("config file " + path.string() + " must hold an object");
    return j;
  } catch (const json::parse_error& e) {
    throw ConfigError("config file " + path.string() + " is not valid JSON: " + e.what());
  }
}

/// `file` is the parsed config file (or an empty object); `flags` holds raw text of the flags given.
inline RunConfig resolve(const std::string& command, const json& file, const std::map<std::string, std::string>& flags) {
  const auto specs = options_for(command);
  const auto find = [&](const std::string& key) -> const OptionSpec* {
    for (const auto* s : specs) {
      if (s->key == key) return s;
    }
    return nullptr;
  };
  RunConfig rc{command, json::object()};
  for (const auto* s : specs) rc.values[s->key] = s->fallback;
  for (const auto& [key, v] : file.items()) {
    if (key == "command") {
      if (v != command) throw ConfigError("config file is for '" + v.dump() + "', not '" + command + "'");
      continue;
    }
    const OptionSpec* s = find(key);
    if (!s) throw ConfigError("unknown config key '" + key + "' for " + command);
    rc.values[key] = check_file_value(*s, v);
  }
  for (const auto& [key, text] : flags) {
    const OptionSpec* s = find(key);
    if (!s) throw ConfigError("unknown option --" + key + " for " + command);
    rc.values[key] = parse_flag_value(*s, text);
  }
  for (const auto* s : specs) {
    if (rc.values[s->key].is_null()) throw ConfigError("missing required option --" + s->key);
  }
  return rc;
}

}  // namespace seqseg::cli
