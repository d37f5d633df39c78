#include "dshift/checkpoint.hpp"

#include <array>
#include <cstring>
#include <fstream>

#include <torch/torch.h>
#include <zlib.h>

#include "dshift/errors.hpp"
#include "dshift/fs_util.hpp"

namespace dshift {

namespace {

constexpr std::array<char, 8> kMagic = {'D', 'S', 'H', 'I', 'F', 'T', 'C', 'K'};

enum class DType : std::uint8_t { f32 = 0, f64 = 1, i64 = 2 };

class Writer {
 public:
  void bytes(const void* data, std::size_t n) {
    const auto* p = static_cast<const char*>(data);
    buf_.insert(buf_.end(), p, p + n);
  }
  template <typename T>
  void uint(T value) {
    for (std::size_t i = 0; i < sizeof(T); ++i) buf_.push_back(static_cast<char>((value >> (8 * i)) & 0xFF));
  }
  void str(const std::string& s) {
    uint<std::uint32_t>(static_cast<std::uint32_t>(s.size()));
    bytes(s.data(), s.size());
  }
  const std::vector<char>& data() const { return buf_; }

 private:
  std::vector<char> buf_;
};

class Reader {
 public:
  Reader(const char* data, std::size_t size) : data_(data), size_(size) {}

  void need(std::size_t n) const {
    if (pos_ + n > size_) throw IntegrityError("checkpoint truncated");
  }
  const char* take(std::size_t n) {
    need(n);
    const char* p = data_ + pos_;
    pos_ += n;
    return p;
  }
  template <typename T>
  T uint() {
    const auto* p = reinterpret_cast<const unsigned char*>(take(sizeof(T)));
    T value = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) value |= static_cast<T>(p[i]) << (8 * i);
    return value;
  }
  std::string str() {
    const auto n = uint<std::uint32_t>();
    const char* p = take(n);
    return std::string(p, n);
  }
  std::size_t pos() const { return pos_; }
  std::size_t remaining() const { return size_ - pos_; }

 private:
  const char* data_;
  std::size_t size_;
  std::size_t pos_ = 0;
};

std::uint32_t crc_of(std::uint32_t crc, const char* data, std::size_t n) {
  // Empty input leaves the running value unchanged.
  if (n == 0) return crc;
  return static_cast<std::uint32_t>(
      crc32(crc, reinterpret_cast<const Bytef*>(data), static_cast<uInt>(n)));
}

DType dtype_of(const torch::Tensor& t) {
  switch (t.scalar_type()) {
    case torch::kFloat32:
      return DType::f32;
    case torch::kFloat64:
      return DType::f64;
    case torch::kInt64:
      return DType::i64;
    default:
      throw ArgumentError("checkpoint: unsupported tensor dtype");
  }
}

torch::ScalarType scalar_type_of(DType d) {
  switch (d) {
    case DType::f32:
      return torch::kFloat32;
    case DType::f64:
      return torch::kFloat64;
    case DType::i64:
      return torch::kInt64;
  }
  throw IntegrityError("checkpoint: unknown dtype tag");
}

}  // namespace

const torch::Tensor* Checkpoint::find(const std::string& name) const {
  for (const auto& [key, tensor] : tensors) {
    if (key == name) return &tensor;
  }
  return nullptr;
}

void save_checkpoint_file(const Checkpoint& checkpoint, const std::filesystem::path& path) {
  Writer payload;
  for (const auto& [name, tensor] : checkpoint.tensors) {
    const torch::Tensor t = tensor.detach().cpu().contiguous();
    payload.str(name);
    payload.uint<std::uint8_t>(static_cast<std::uint8_t>(dtype_of(t)));
    payload.uint<std::uint32_t>(static_cast<std::uint32_t>(t.dim()));
    for (auto d : t.sizes()) payload.uint<std::uint64_t>(static_cast<std::uint64_t>(d));
    // Raw host-order data; every supported platform is little-endian.
    payload.bytes(t.data_ptr(), t.nbytes());
  }

  const std::string config_text = checkpoint.config.dump();
  std::uint32_t crc = crc_of(0, checkpoint.algorithm.data(), checkpoint.algorithm.size());
  crc = crc_of(crc, config_text.data(), config_text.size());
  crc = crc_of(crc, payload.data().data(), payload.data().size());

  Writer header;
  header.bytes(kMagic.data(), kMagic.size());
  header.uint<std::uint32_t>(Checkpoint::kVersion);
  header.str(checkpoint.algorithm);
  header.str(config_text);
  header.uint<std::uint32_t>(static_cast<std::uint32_t>(checkpoint.tensors.size()));
  header.uint<std::uint64_t>(payload.data().size());
  header.uint<std::uint32_t>(crc);

  commit_atomic(path, [&](const std::filesystem::path& staged) {
    std::ofstream out(staged, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot open " + staged.string() + " for writing");
    out.write(header.data().data(), static_cast<std::streamsize>(header.data().size()));
    out.write(payload.data().data(), static_cast<std::streamsize>(payload.data().size()));
    if (!out) throw Error("failed writing checkpoint " + staged.string());
  });
}

Checkpoint load_checkpoint_file(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw NotFoundError("checkpoint not found: " + path.string());
  const std::string raw = read_text(path);
  Reader in(raw.data(), raw.size());

  if (raw.size() < kMagic.size() || std::memcmp(raw.data(), kMagic.data(), kMagic.size()) != 0)
    throw IntegrityError("not a dshift checkpoint: " + path.string());
  in.take(kMagic.size());
  const auto version = in.uint<std::uint32_t>();
  if (version != Checkpoint::kVersion)
    throw CompatibilityError("unsupported checkpoint version " + std::to_string(version));

  Checkpoint checkpoint;
  checkpoint.algorithm = in.str();
  const std::string config_text = in.str();
  const auto block_count = in.uint<std::uint32_t>();
  const auto payload_size = in.uint<std::uint64_t>();
  const auto expected_crc = in.uint<std::uint32_t>();
  if (in.remaining() != payload_size)
    throw IntegrityError("checkpoint payload size mismatch (truncated or padded): " + path.string());

  std::uint32_t crc = crc_of(0, checkpoint.algorithm.data(), checkpoint.algorithm.size());
  crc = crc_of(crc, config_text.data(), config_text.size());
  crc = crc_of(crc, raw.data() + in.pos(), payload_size);
  if (crc != expected_crc) throw IntegrityError("checkpoint checksum mismatch: " + path.string());

  try {
    checkpoint.config = nlohmann::json::parse(config_text);
  } catch (const nlohmann::json::exception& e) {
    throw IntegrityError(std::string("checkpoint config is not valid JSON: ") + e.what());
  }

  for (std::uint32_t b = 0; b < block_count; ++b) {
    std::string name = in.str();
    const auto dtype = static_cast<DType>(in.uint<std::uint8_t>());
    const auto ndim = in.uint<std::uint32_t>();
    std::vector<std::int64_t> dims(ndim);
    for (auto& d : dims) d = static_cast<std::int64_t>(in.uint<std::uint64_t>());
    torch::Tensor t = torch::empty(dims, torch::TensorOptions().dtype(scalar_type_of(dtype)));
    const char* data = in.take(t.nbytes());
    std::memcpy(t.data_ptr(), data, t.nbytes());
    checkpoint.tensors.emplace_back(std::move(name), std::move(t));
  }
  if (in.remaining() != 0) throw IntegrityError("trailing bytes after checkpoint payload");
  return checkpoint;
}

void append_module_state(Checkpoint& checkpoint, const torch::nn::Module& module,
                         const std::string& prefix) {
  for (const auto& item : module.named_parameters(true))
    checkpoint.tensors.emplace_back(prefix + item.key(), item.value().detach().clone());
  for (const auto& item : module.named_buffers(true))
    checkpoint.tensors.emplace_back(prefix + item.key(), item.value().detach().clone());
}

void restore_module_state(const Checkpoint& checkpoint, torch::nn::Module& module,
                          const std::string& prefix) {
  torch::NoGradGuard no_grad;
  auto copy_into = [&](const std::string& local, torch::Tensor& target) {
    const torch::Tensor* source = checkpoint.find(prefix + local);
    if (source == nullptr)
      throw CompatibilityError("checkpoint has no tensor named '" + prefix + local + "'");
    if (source->sizes() != target.sizes())
      throw CompatibilityError("shape mismatch for '" + prefix + local + "'");
    target.copy_(*source);
  };
  for (auto& item : module.named_parameters(true)) copy_into(item.key(), item.value());
  for (auto& item : module.named_buffers(true)) copy_into(item.key(), item.value());
}

}  // namespace dshift
