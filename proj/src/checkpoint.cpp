#include "patchlikely/checkpoint.hpp"

#include <zlib.h>

#include <bit>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace patchlikely {

namespace {

class Writer {
 public:
  void u32(uint32_t v) {
    for (int i = 0; i < 4; ++i) bytes_.push_back(static_cast<uint8_t>(v >> (8 * i)));
  }
  void u64(uint64_t v) {
    for (int i = 0; i < 8; ++i) bytes_.push_back(static_cast<uint8_t>(v >> (8 * i)));
  }
  void raw(const void* data, size_t n) {
    const auto* p = static_cast<const uint8_t*>(data);
    bytes_.insert(bytes_.end(), p, p + n);
  }
  void tensor(const Tensor& t) {
    u32(static_cast<uint32_t>(t.rank()));
    for (int64_t e : t.shape()) u32(static_cast<uint32_t>(e));
    for (float v : t.data()) u32(std::bit_cast<uint32_t>(v));
  }
  std::vector<uint8_t>& bytes() { return bytes_; }

 private:
  std::vector<uint8_t> bytes_;
};

class Reader {
 public:
  Reader(const std::vector<uint8_t>& bytes, size_t end, std::string origin)
      : bytes_(bytes), end_(end), origin_(std::move(origin)) {}

  uint32_t u32() {
    need(4);
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(bytes_[pos_ + static_cast<size_t>(i)]) << (8 * i);
    pos_ += 4;
    return v;
  }
  uint64_t u64() {
    const uint64_t lo = u32();
    const uint64_t hi = u32();
    return lo | (hi << 32);
  }
  Tensor tensor(const Shape& expected, const std::string& what) {
    const uint32_t rank = u32();
    if (rank > 8) fail("implausible rank " + std::to_string(rank) + " for " + what);
    Shape shape;
    for (uint32_t i = 0; i < rank; ++i) shape.push_back(u32());
    if (shape != expected) {
      fail(what + " has shape " + shape_to_string(shape) + ", expected " + shape_to_string(expected));
    }
    Tensor t(shape);
    need(static_cast<size_t>(t.size()) * 4);
    for (float& v : t.data()) v = std::bit_cast<float>(u32());
    return t;
  }
  size_t position() const { return pos_; }
  [[noreturn]] void fail(const std::string& why) const { throw Error(ErrorKind::kFormat, origin_ + ": " + why); }

 private:
  void need(size_t n) const {
    if (pos_ + n > end_) fail("truncated checkpoint");
  }
  const std::vector<uint8_t>& bytes_;
  size_t pos_ = 0;
  size_t end_;
  std::string origin_;
};

uint32_t crc32_of(const uint8_t* data, size_t n) {
  uLong crc = crc32(0L, Z_NULL, 0);
  // zlib takes uInt lengths; feed in bounded pieces.
  while (n > 0) {
    const uInt piece = static_cast<uInt>(std::min<size_t>(n, 1u << 30));
    crc = crc32(crc, data, piece);
    data += piece;
    n -= piece;
  }
  return static_cast<uint32_t>(crc);
}

}  // namespace

std::vector<uint8_t> serialize_checkpoint(const Checkpoint& ckpt) {
  const FlowConfig& cfg = ckpt.params.config;
  const auto tensors = ckpt.params.tensors();
  if (ckpt.optimizer.m.size() != tensors.size() || ckpt.optimizer.v.size() != tensors.size()) {
    throw Error(ErrorKind::kInvalidArgument, "checkpoint optimizer state does not match the model");
  }
  Writer w;
  w.raw(kCheckpointMagic, 4);
  w.u32(kCheckpointVersion);
  w.u32(static_cast<uint32_t>(cfg.patch_size));
  w.u32(static_cast<uint32_t>(cfg.channels));
  w.u32(static_cast<uint32_t>(cfg.steps));
  w.u32(static_cast<uint32_t>(cfg.hidden_width));
  w.u64(ckpt.step);
  w.u64(ckpt.seed);
  for (const Tensor* t : tensors) w.tensor(*t);
  for (const Tensor& t : ckpt.optimizer.m) w.tensor(t);
  for (const Tensor& t : ckpt.optimizer.v) w.tensor(t);
  const uint32_t crc = crc32_of(w.bytes().data(), w.bytes().size());
  w.u32(crc);
  return std::move(w.bytes());
}

Checkpoint deserialize_checkpoint(const std::vector<uint8_t>& bytes, const std::string& origin) {
  if (bytes.size() < 8 + 4) throw Error(ErrorKind::kFormat, origin + ": truncated checkpoint");
  if (std::memcmp(bytes.data(), kCheckpointMagic, 4) != 0) {
    throw Error(ErrorKind::kFormat, origin + ": bad magic, not a patch-likelihood checkpoint");
  }
  Reader header(bytes, bytes.size(), origin);
  header.u32();  // magic
  const uint32_t version = header.u32();
  if (version != kCheckpointVersion) {
    throw Error(ErrorKind::kUnsupported, origin + ": unsupported version " + std::to_string(version) +
                                             " (this build reads version " + std::to_string(kCheckpointVersion) + ")");
  }
  const size_t body_end = bytes.size() - 4;
  uint32_t stored_crc = 0;
  for (int i = 0; i < 4; ++i) stored_crc |= static_cast<uint32_t>(bytes[body_end + static_cast<size_t>(i)]) << (8 * i);
  if (crc32_of(bytes.data(), body_end) != stored_crc) {
    throw Error(ErrorKind::kFormat, origin + ": CRC mismatch (corrupt or truncated checkpoint)");
  }

  Reader r(bytes, body_end, origin);
  r.u32();
  r.u32();
  FlowConfig cfg;
  cfg.patch_size = static_cast<int>(r.u32());
  cfg.channels = static_cast<int>(r.u32());
  cfg.steps = static_cast<int>(r.u32());
  cfg.hidden_width = static_cast<int>(r.u32());
  try {
    cfg.validate();
  } catch (const Error& e) {
    r.fail(std::string("invalid model header: ") + e.what());
  }
  Checkpoint ckpt;
  ckpt.step = r.u64();
  ckpt.seed = r.u64();
  // Shapes come from a freshly built model with the same configuration.
  ckpt.params = identity_flow(cfg);
  auto tensors = ckpt.params.tensors();
  for (size_t k = 0; k < tensors.size(); ++k) {
    *tensors[k] = r.tensor(tensors[k]->shape(), "parameter " + std::to_string(k));
  }
  for (size_t k = 0; k < tensors.size(); ++k) {
    ckpt.optimizer.m.push_back(r.tensor(tensors[k]->shape(), "first moment " + std::to_string(k)));
  }
  for (size_t k = 0; k < tensors.size(); ++k) {
    ckpt.optimizer.v.push_back(r.tensor(tensors[k]->shape(), "second moment " + std::to_string(k)));
  }
  if (r.position() != body_end) r.fail("trailing bytes after the last tensor");
  return ckpt;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  const std::vector<uint8_t> bytes = serialize_checkpoint(ckpt);
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorKind::kIo, tmp.string() + ": cannot open for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error(ErrorKind::kIo, tmp.string() + ": write failed");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw Error(ErrorKind::kIo, path.string() + ": cannot move checkpoint into place: " + ec.message());
}

std::vector<uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::kIo, path.string() + ": cannot open file");
  return std::vector<uint8_t>(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  return deserialize_checkpoint(read_file_bytes(path), path.string());
}

std::string content_hash(const std::vector<uint8_t>& bytes) {
  uint64_t h = 0xcbf29ce484222325ULL;
  for (uint8_t b : bytes) {
    h ^= b;
    h *= 0x100000001b3ULL;
  }
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << h;
  return os.str();
}

}  // namespace patchlikely
