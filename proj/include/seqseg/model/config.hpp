#pragma once

#include <algorithm>
#include <string>
#include <vector>

#include "seqseg/core/errors.hpp"

namespace seqseg::model {

struct EncoderConfig {
  int blocks = 5;          // n_b
  int base_channels = 8;   // channels of the shallowest block
  int channel_growth = 2;  // multiplier per deeper block
  int in_channels = 3;

  /// Channels of f_i (i = 0 is the deepest block).
  int feature_channels(int i) const {
    int c = base_channels;
    for (int j = 0; j < blocks - 1 - i; ++j) c *= channel_growth;
    return c;
  }
  /// Downsampling factor of f_i relative to the input.
  int feature_stride(int i) const { return 1 << (blocks - i); }

  void validate() const {
    if (blocks < 1) throw ConfigError("encoder blocks must be >= 1");
    if (base_channels < 1 || channel_growth < 1 || in_channels < 1) {
      throw ConfigError("encoder channel settings must be positive");
    }
  }
};

enum class SkipMode { concat, sum, mult, none };

inline std::string to_string(SkipMode m) {
  switch (m) {
    case SkipMode::concat: return "concat";
    case SkipMode::sum: return "sum";
    case SkipMode::mult: return "mult";
    case SkipMode::none: return "none";
  }
  return "concat";
}

inline SkipMode parse_skip_mode(const std::string& s) {
  if (s == "concat") return SkipMode::concat;
  if (s == "sum") return SkipMode::sum;
  if (s == "mult") return SkipMode::mult;
  if (s == "none") return SkipMode::none;
  throw ConfigError("unknown skip mode: " + s);
}

struct DecoderConfig {
  int num_layers = 0;  // 0 means "same as encoder blocks"
  int hidden = 32;     // D
  SkipMode skip = SkipMode::concat;
  int classes = 3;

  int layers(const EncoderConfig& enc) const { return num_layers > 0 ? num_layers : enc.blocks; }

  /// D, D, D/2, D/4, ... floored at 2.
  int hidden_channels(int layer) const {
    int c = hidden;
    for (int i = 2; i <= layer; ++i) c = std::max(2, c / 2);
    return c;
  }

  int pooled_size(const EncoderConfig& enc) const {
    int n = 0;
    for (int i = 0; i < layers(enc); ++i) n += hidden_channels(i);
    return n;
  }

  /// Channels of the projected skip S_i, or 0 when layer i takes no skip.
  int projection_channels(int layer) const {
    if (layer == 0) return hidden_channels(0);
    switch (skip) {
      case SkipMode::concat: return hidden_channels(layer);
      case SkipMode::sum:
      case SkipMode::mult: return hidden_channels(layer - 1);
      case SkipMode::none: return 0;
    }
    return 0;
  }

  /// Channels entering ConvLSTM_i before its own hidden state is appended.
  int input_channels(int layer) const {
    if (layer == 0) return hidden_channels(0);
    const int up = hidden_channels(layer - 1);
    return skip == SkipMode::concat ? up + hidden_channels(layer) : up;
  }

  void validate(const EncoderConfig& enc) const {
    if (hidden < 1) throw ConfigError("decoder hidden dimension must be >= 1");
    if (classes < 1) throw ConfigError("class count must be >= 1");
    if (num_layers < 0 || num_layers > enc.blocks) {
      throw ConfigError("decoder layers must be in [1, encoder blocks]");
    }
  }
};

}  // namespace seqseg::model
