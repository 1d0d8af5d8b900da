#include "yffn/checkpoint.hpp"

#include <algorithm>
#include <array>
#include <cstring>
#include <fstream>
#include <map>
#include <stdexcept>

#include "yffn/common.hpp"

namespace yffn {

namespace {

constexpr std::array<std::uint8_t, 4> kMagic{'Y', 'F', 'F', 'N'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  out.push_back(static_cast<std::uint8_t>(v));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
  out.push_back(static_cast<std::uint8_t>(v >> 16));
  out.push_back(static_cast<std::uint8_t>(v >> 24));
}

void put_f64(std::vector<std::uint8_t>& out, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, sizeof(bits));
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(bits >> (8 * i)));
}

class Reader {
 public:
  explicit Reader(const std::vector<std::uint8_t>& bytes) : bytes_(bytes) {}

  std::size_t offset() const { return offset_; }
  std::size_t remaining() const { return limit_ - offset_; }
  void set_limit(std::size_t limit) { limit_ = limit; }

  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes_[offset_ + i]) << (8 * i);
    offset_ += 4;
    return v;
  }

  double f64(const char* what) {
    need(8, what);
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(bytes_[offset_ + i]) << (8 * i);
    offset_ += 8;
    double v;
    std::memcpy(&v, &bits, sizeof(v));
    return v;
  }

  std::string str(std::size_t n, const char* what) {
    need(n, what);
    std::string s(reinterpret_cast<const char*>(bytes_.data() + offset_), n);
    offset_ += n;
    return s;
  }

  [[noreturn]] void fail(const std::string& why) const {
    throw std::runtime_error(detail::cat("checkpoint parse error at byte ", offset_, ": ", why));
  }

 private:
  void need(std::size_t n, const char* what) {
    if (offset_ + n > limit_) {
      fail(detail::cat("truncated while reading ", what));
    }
  }

  const std::vector<std::uint8_t>& bytes_;
  std::size_t offset_ = 0;
  std::size_t limit_ = 0;
};

}  // namespace

std::uint32_t crc32(const std::uint8_t* data, std::size_t n) {
  static const auto table = [] {
    std::array<std::uint32_t, 256> t{};
    for (std::uint32_t i = 0; i < 256; ++i) {
      std::uint32_t c = i;
      for (int bit = 0; bit < 8; ++bit) c = (c & 1) ? 0xEDB88320u ^ (c >> 1) : c >> 1;
      t[i] = c;
    }
    return t;
  }();
  std::uint32_t crc = 0xFFFFFFFFu;
  for (std::size_t i = 0; i < n; ++i) crc = table[(crc ^ data[i]) & 0xFFu] ^ (crc >> 8);
  return crc ^ 0xFFFFFFFFu;
}

std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& ckpt) {
  ckpt.config.validate();
  std::vector<std::uint8_t> out(kMagic.begin(), kMagic.end());
  put_u32(out, kVersion);
  put_u32(out, static_cast<std::uint32_t>(ckpt.config.input_size));
  put_u32(out, static_cast<std::uint32_t>(ckpt.config.base_channels));
  put_u32(out, static_cast<std::uint32_t>(ckpt.config.anchors_per_scale));
  put_u32(out, static_cast<std::uint32_t>(ckpt.config.class_count));

  for_each_tensor(ckpt, [&out](const std::string& name, const Tensor& t) {
    put_u32(out, static_cast<std::uint32_t>(name.size()));
    out.insert(out.end(), name.begin(), name.end());
    put_u32(out, static_cast<std::uint32_t>(t.rank()));
    for (int a = 0; a < t.rank(); ++a) put_u32(out, static_cast<std::uint32_t>(t.extent(a)));
    for (std::size_t i = 0; i < t.size(); ++i) put_f64(out, t[i]);
  });

  put_u32(out, crc32(out.data(), out.size()));
  return out;
}

Checkpoint parse_checkpoint(const std::vector<std::uint8_t>& bytes) {
  Reader r(bytes);
  if (bytes.size() < kMagic.size() + 4) r.fail("file too short for header and checksum");
  r.set_limit(bytes.size());

  const std::uint32_t stored_crc =
      static_cast<std::uint32_t>(bytes[bytes.size() - 4]) |
      static_cast<std::uint32_t>(bytes[bytes.size() - 3]) << 8 |
      static_cast<std::uint32_t>(bytes[bytes.size() - 2]) << 16 |
      static_cast<std::uint32_t>(bytes[bytes.size() - 1]) << 24;
  if (crc32(bytes.data(), bytes.size() - 4) != stored_crc) {
    throw std::runtime_error("checkpoint rejected: CRC32 mismatch");
  }
  r.set_limit(bytes.size() - 4);

  const std::string magic = r.str(4, "magic");
  if (!std::equal(magic.begin(), magic.end(), kMagic.begin())) {
    r.fail(detail::cat("bad magic '", magic, "'"));
  }
  const std::uint32_t version = r.u32("version");
  if (version != kVersion) r.fail(detail::cat("unsupported format version ", version));

  NetworkConfig cfg;
  cfg.input_size = static_cast<int>(r.u32("input_size"));
  cfg.base_channels = static_cast<int>(r.u32("base_channels"));
  cfg.anchors_per_scale = static_cast<int>(r.u32("anchors_per_scale"));
  cfg.class_count = static_cast<int>(r.u32("class_count"));
  try {
    cfg.validate();
  } catch (const std::invalid_argument& e) {
    r.fail(e.what());
  }

  std::map<std::string, Tensor> entries;
  while (r.remaining() > 0) {
    const std::uint32_t name_len = r.u32("name length");
    if (name_len == 0 || name_len > 4096) r.fail(detail::cat("implausible name length ", name_len));
    const std::string name = r.str(name_len, "name");
    const std::uint32_t rank = r.u32("rank");
    if (rank > 8) r.fail(detail::cat("implausible rank ", rank));
    std::vector<int> shape(rank);
    std::size_t volume = 1;
    for (std::uint32_t a = 0; a < rank; ++a) {
      shape[a] = static_cast<int>(r.u32("extent"));
      volume *= static_cast<std::size_t>(shape[a]);
    }
    if (volume > r.remaining() / 8) r.fail("tensor payload larger than remaining bytes");
    std::vector<double> data(volume);
    for (std::size_t i = 0; i < volume; ++i) data[i] = r.f64("tensor payload");
    if (!entries.emplace(name, Tensor(shape, std::move(data))).second) {
      r.fail(detail::cat("duplicate tensor '", name, "'"));
    }
  }

  Checkpoint ckpt = ModelParams::structure(cfg);
  std::size_t used = 0;
  for_each_tensor(ckpt, [&](const std::string& name, Tensor& t) {
    auto it = entries.find(name);
    if (it == entries.end()) {
      throw std::runtime_error(detail::cat("checkpoint missing tensor '", name, "'"));
    }
    if (!it->second.same_shape(t)) {
      throw std::runtime_error(detail::cat("checkpoint tensor '", name, "' has shape ",
                                           it->second.shape_str(), ", expected ", t.shape_str()));
    }
    t = it->second;
    ++used;
  });
  if (used != entries.size()) {
    throw std::runtime_error(detail::cat("checkpoint contains ", entries.size() - used,
                                         " unknown tensor(s)"));
  }
  return ckpt;
}

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  const std::vector<std::uint8_t> bytes = serialize_checkpoint(ckpt);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error(detail::cat("cannot open '", path, "' for writing"));
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw std::runtime_error(detail::cat("failed writing checkpoint to '", path, "'"));
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error(detail::cat("cannot open checkpoint '", path, "'"));
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)),
                                  std::istreambuf_iterator<char>());
  return parse_checkpoint(bytes);
}

}  // namespace yffn
