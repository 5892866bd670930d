#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "np2mt/data/vocabulary.hpp"
#include "np2mt/model/config.hpp"
#include "np2mt/model/model.hpp"

// Container layout, all integers little-endian:
//   "NP2M" | u32 version | u64 header bytes | header text
//   u64 parameter count, then per parameter:
//   u32 name bytes | name | u32 rank | u64 dims[rank] | u8 scalar bytes (4|8) | data
// The header text is the config followed by both vocabularies:
//   [config]\n<key=value lines>[source]\n<tokens>[target]\n<tokens>

namespace np2mt {

inline constexpr std::uint32_t kCheckpointVersion = 1;

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};
class CheckpointVersionError : public CheckpointError {
 public:
  using CheckpointError::CheckpointError;
};
class CheckpointShapeError : public CheckpointError {
 public:
  using CheckpointError::CheckpointError;
};
class CheckpointCorruptError : public CheckpointError {
 public:
  using CheckpointError::CheckpointError;
};

template <typename T>
struct Checkpoint {
  Np2mtModel<T> model;
  Vocabulary source_vocab;
  Vocabulary target_vocab;
};

namespace detail {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes little-endian");

template <typename U>
void put(std::string& out, U v) {
  char buf[sizeof(U)];
  std::memcpy(buf, &v, sizeof(U));
  out.append(buf, sizeof(U));
}

class Reader {
 public:
  explicit Reader(std::string data) : data_(std::move(data)) {}

  template <typename U>
  U get() {
    U v;
    std::memcpy(&v, take(sizeof(U)), sizeof(U));
    return v;
  }

  const char* take(std::size_t n) {
    if (n > data_.size() - pos_) throw CheckpointCorruptError("checkpoint truncated");
    const char* p = data_.data() + pos_;
    pos_ += n;
    return p;
  }

  bool done() const { return pos_ == data_.size(); }

 private:
  std::string data_;
  std::size_t pos_ = 0;
};

inline std::string section(const std::string& text, const std::string& name,
                           const std::string& next) {
  const std::string open = "[" + name + "]\n";
  auto b = text.find(open);
  if (b == std::string::npos) throw CheckpointCorruptError("checkpoint header lacks " + open);
  b += open.size();
  auto e = next.empty() ? text.size() : text.find("[" + next + "]\n", b);
  if (e == std::string::npos) throw CheckpointCorruptError("checkpoint header lacks [" + next + "]");
  return text.substr(b, e - b);
}

}  // namespace detail

template <typename T>
std::string serialize_checkpoint(const Np2mtModel<T>& model, const Vocabulary& source_vocab,
                                 const Vocabulary& target_vocab) {
  std::string header = "[config]\n" + model.config().to_text() + "[source]\n" +
                       source_vocab.to_text() + "[target]\n" + target_vocab.to_text();
  std::string out = "NP2M";
  detail::put<std::uint32_t>(out, kCheckpointVersion);
  detail::put<std::uint64_t>(out, header.size());
  out += header;
  const auto& store = model.params();
  detail::put<std::uint64_t>(out, store.size());
  for (const auto& p : store) {
    detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(p.name.size()));
    out += p.name;
    detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(p.value.shape().size()));
    for (std::size_t d : p.value.shape()) detail::put<std::uint64_t>(out, d);
    detail::put<std::uint8_t>(out, sizeof(T));
    out.append(reinterpret_cast<const char*>(p.value.data()), p.value.size() * sizeof(T));
  }
  return out;
}

/// Rebuilds a model of precision T. Arrays stored at the other precision
/// are converted.
template <typename T>
Checkpoint<T> deserialize_checkpoint(std::string bytes) {
  detail::Reader in(std::move(bytes));
  if (std::string(in.take(4), 4) != "NP2M") throw CheckpointCorruptError("not a checkpoint (bad magic)");
  const auto version = in.get<std::uint32_t>();
  if (version != kCheckpointVersion)
    throw CheckpointVersionError("checkpoint format version " + std::to_string(version) +
                                 ", expected " + std::to_string(kCheckpointVersion));
  const auto header_size = in.get<std::uint64_t>();
  const std::string header(in.take(header_size), header_size);
  ModelConfig config;
  Vocabulary src, tgt;
  try {
    config = ModelConfig::from_text(detail::section(header, "config", "source"));
    src = Vocabulary::from_text(detail::section(header, "source", "target"));
    tgt = Vocabulary::from_text(detail::section(header, "target", ""));
  } catch (const CheckpointError&) {
    throw;
  } catch (const std::exception& e) {
    throw CheckpointCorruptError(std::string("bad checkpoint header: ") + e.what());
  }
  if (src.size() != config.src_vocab || tgt.size() != config.tgt_vocab)
    throw CheckpointShapeError("vocabulary sizes disagree with the stored config");

  Checkpoint<T> ck{Np2mtModel<T>(config, 0), std::move(src), std::move(tgt)};
  auto& store = ck.model.params();
  const auto count = in.get<std::uint64_t>();
  if (count != store.size())
    throw CheckpointShapeError("checkpoint has " + std::to_string(count) + " arrays, config needs " +
                               std::to_string(store.size()));
  std::vector<bool> seen(store.size(), false);
  for (std::uint64_t n = 0; n < count; ++n) {
    const auto name_size = in.get<std::uint32_t>();
    const std::string name(in.take(name_size), name_size);
    const auto rank = in.get<std::uint32_t>();
    if (rank > 8) throw CheckpointCorruptError("implausible rank for " + name);
    Shape shape;
    for (std::uint32_t r = 0; r < rank; ++r) shape.push_back(in.get<std::uint64_t>());
    const auto width = in.get<std::uint8_t>();
    if (width != 4 && width != 8) throw CheckpointCorruptError("bad scalar width for " + name);
    if (!store.contains(name)) throw CheckpointShapeError("unexpected array " + name);
    const ParamId id = store.id_of(name);
    auto& value = store[id].value;
    if (shape != value.shape())
      throw CheckpointShapeError(name + ": stored shape " + shape_string(shape) + ", config needs " +
                                 shape_string(value.shape()));
    if (seen[id]) throw CheckpointCorruptError("array stored twice: " + name);
    seen[id] = true;
    const char* raw = in.take(value.size() * width);
    if (width == sizeof(T)) {
      std::memcpy(value.data(), raw, value.size() * sizeof(T));
    } else if (width == 4) {
      for (std::size_t i = 0; i < value.size(); ++i) {
        float f;
        std::memcpy(&f, raw + 4 * i, 4);
        value[i] = static_cast<T>(f);
      }
    } else {
      for (std::size_t i = 0; i < value.size(); ++i) {
        double d;
        std::memcpy(&d, raw + 8 * i, 8);
        value[i] = static_cast<T>(d);
      }
    }
  }
  if (!in.done()) throw CheckpointCorruptError("trailing bytes after the last array");
  return ck;
}

template <typename T>
void save_checkpoint(const std::string& path, const Np2mtModel<T>& model,
                     const Vocabulary& source_vocab, const Vocabulary& target_vocab) {
  const std::string bytes = serialize_checkpoint(model, source_vocab, target_vocab);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write checkpoint " + path);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("failed writing checkpoint " + path);
}

template <typename T>
Checkpoint<T> load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read checkpoint " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return deserialize_checkpoint<T>(ss.str());
}

}  // namespace np2mt
