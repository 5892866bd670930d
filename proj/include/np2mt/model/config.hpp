#pragma once

#include <cstddef>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>

namespace np2mt {

struct ModelConfig {
  std::size_t src_vocab = 0;
  std::size_t tgt_vocab = 0;
  std::size_t width = 64;
  std::size_t max_src_span = 4;     // longest source phrase that gets an encoding
  std::size_t max_tgt_segment = 4;  // longest target segment
  std::size_t encoder_layers = 2;   // source sentence encoder and target prefix encoder
  std::size_t decoder_layers = 2;   // segment decoder
  std::size_t heads = 4;
  std::size_t ff_width = 128;
  double dropout = 0.1;
  std::size_t max_decode_length = 100;

  void validate() const {
    auto fail = [](const std::string& what) { throw std::invalid_argument("ModelConfig: " + what); };
    if (src_vocab == 0 || tgt_vocab == 0) fail("vocabulary sizes must be positive");
    if (width == 0) fail("width must be positive");
    if (max_src_span < 1) fail("max_src_span must be >= 1");
    if (max_tgt_segment < 1) fail("max_tgt_segment must be >= 1");
    if (encoder_layers < 1 || decoder_layers < 1) fail("layer counts must be >= 1");
    if (heads == 0 || width % heads != 0) fail("width must be divisible by heads");
    if (ff_width == 0) fail("ff_width must be positive");
    if (!(dropout >= 0.0 && dropout < 1.0)) fail("dropout must lie in [0, 1)");
    if (max_decode_length < 1) fail("max_decode_length must be >= 1");
  }

  /// Canonical key=value text, one field per line in fixed order.
  std::string to_text() const {
    std::ostringstream out;
    out.precision(17);
    out << "src_vocab=" << src_vocab << '\n'
        << "tgt_vocab=" << tgt_vocab << '\n'
        << "width=" << width << '\n'
        << "max_src_span=" << max_src_span << '\n'
        << "max_tgt_segment=" << max_tgt_segment << '\n'
        << "encoder_layers=" << encoder_layers << '\n'
        << "decoder_layers=" << decoder_layers << '\n'
        << "heads=" << heads << '\n'
        << "ff_width=" << ff_width << '\n'
        << "dropout=" << dropout << '\n'
        << "max_decode_length=" << max_decode_length << '\n';
    return out.str();
  }

  static ModelConfig from_text(const std::string& text) {
    std::map<std::string, std::string> kv;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      auto eq = line.find('=');
      if (eq == std::string::npos) throw std::runtime_error("config line without '=': " + line);
      kv[line.substr(0, eq)] = line.substr(eq + 1);
    }
    auto get = [&](const char* key) -> const std::string& {
      auto it = kv.find(key);
      if (it == kv.end()) throw std::runtime_error(std::string("config missing ") + key);
      return it->second;
    };
    auto size = [&](const char* key) { return static_cast<std::size_t>(std::stoull(get(key))); };
    ModelConfig c;
    c.src_vocab = size("src_vocab");
    c.tgt_vocab = size("tgt_vocab");
    c.width = size("width");
    c.max_src_span = size("max_src_span");
    c.max_tgt_segment = size("max_tgt_segment");
    c.encoder_layers = size("encoder_layers");
    c.decoder_layers = size("decoder_layers");
    c.heads = size("heads");
    c.ff_width = size("ff_width");
    c.dropout = std::stod(get("dropout"));
    c.max_decode_length = size("max_decode_length");
    c.validate();
    return c;
  }

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

}  // namespace np2mt
