#include "bsoda/nn/checkpoint.hpp"

#include <bit>
#include <cstring>

#include "bsoda/core/json_io.hpp"
#include "bsoda/core/types.hpp"

namespace bsoda::nn {

namespace {

constexpr char kMagic[4] = {'B', 'S', 'D', 'T'};

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

class Reader {
 public:
  explicit Reader(std::string_view bytes) : bytes_(bytes) {}

  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) {
      v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    }
    pos_ += 4;
    return v;
  }

  std::string_view take(std::size_t n) {
    need(n);
    auto s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > bytes_.size()) throw ParseError("checkpoint truncated at byte " + std::to_string(pos_));
  }
  std::string_view bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string encode_tensors(const NamedTensors& tensors) {
  std::string out(kMagic, 4);
  put_u32(out, kCheckpointVersion);
  put_u32(out, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& [name, t] : tensors) {
    put_u32(out, static_cast<std::uint32_t>(name.size()));
    out += name;
    put_u32(out, static_cast<std::uint32_t>(t.rows()));
    put_u32(out, static_cast<std::uint32_t>(t.cols()));
    for (Eigen::Index i = 0; i < t.size(); ++i) {
      put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(t.data()[i])));
    }
  }
  return out;
}

NamedTensors decode_tensors(std::string_view bytes) {
  Reader in(bytes);
  if (in.take(4) != std::string_view(kMagic, 4)) throw ParseError("not a tensor checkpoint (bad magic)");
  const std::uint32_t version = in.u32();
  if (version != kCheckpointVersion) {
    throw ParseError("unsupported checkpoint version " + std::to_string(version));
  }
  const std::uint32_t count = in.u32();
  NamedTensors out;
  for (std::uint32_t k = 0; k < count; ++k) {
    std::string name(in.take(in.u32()));
    const std::uint32_t rows = in.u32();
    const std::uint32_t cols = in.u32();
    Tensor2 t(rows, cols);
    for (Eigen::Index i = 0; i < t.size(); ++i) t.data()[i] = std::bit_cast<float>(in.u32());
    if (!out.emplace(std::move(name), std::move(t)).second) throw ParseError("duplicate tensor name in checkpoint");
  }
  if (!in.done()) throw ParseError("trailing bytes after checkpoint payload");
  return out;
}

void save_tensors(const NamedTensors& tensors, const std::filesystem::path& path) {
  write_text_file(path, encode_tensors(tensors));
}

NamedTensors load_tensors(const std::filesystem::path& path) {
  try {
    return decode_tensors(read_text_file(path));
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

NamedTensors tensors_of(const ParamStore& store) {
  NamedTensors out;
  for (const auto& name : store.names()) out.emplace(name, store.value(name));
  return out;
}

void assign_tensors(ParamStore& store, const NamedTensors& tensors) {
  for (const auto& [name, t] : tensors) {
    auto& p = store.at(name);
    if (p.value.rows() != t.rows() || p.value.cols() != t.cols()) {
      throw ValidationError("checkpoint tensor '" + name + "' has the wrong shape");
    }
  }
  for (const auto& name : store.names()) {
    if (!tensors.contains(name)) throw ValidationError("checkpoint lacks tensor '" + name + "'");
  }
  for (const auto& [name, t] : tensors) store.at(name).value = t;
}

}  // namespace bsoda::nn
