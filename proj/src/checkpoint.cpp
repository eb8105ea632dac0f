#include "uqcov/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>

namespace uqcov {

namespace {

constexpr char kMagic[4] = {'U', 'Q', 'C', 'K'};
constexpr unsigned char kVersion = 0x01;

void put_u16(std::string& out, std::uint16_t v) {
  out.push_back(static_cast<char>(v & 0xFF));
  out.push_back(static_cast<char>((v >> 8) & 0xFF));
}

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void put_f64(std::string& out, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, 8);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xFF));
}

struct Reader {
  const unsigned char* p;
  const unsigned char* end;
  const std::string& path;

  void need(std::size_t n) const {
    if (static_cast<std::size_t>(end - p) < n) {
      throw std::runtime_error("checkpoint: truncated file " + path);
    }
  }
  std::uint16_t u16() {
    need(2);
    std::uint16_t v = p[0] | (std::uint16_t(p[1]) << 8);
    p += 2;
    return v;
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t(p[i]) << (8 * i);
    p += 4;
    return v;
  }
  double f64() {
    need(8);
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) bits |= std::uint64_t(p[i]) << (8 * i);
    p += 8;
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
  }
};

}  // namespace

void write_checkpoint(const std::string& path,
                      const std::vector<CheckpointTensor>& tensors) {
  std::string buf;
  buf.append(kMagic, 4);
  buf.push_back(static_cast<char>(kVersion));
  put_u32(buf, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& t : tensors) {
    if (t.name.size() > 0xFFFF) throw std::invalid_argument("checkpoint: name too long");
    std::size_t expect = 1;
    for (auto d : t.dims) expect *= d;
    if (expect != t.values.size()) {
      throw std::invalid_argument("checkpoint: dims do not match data for " + t.name);
    }
    put_u16(buf, static_cast<std::uint16_t>(t.name.size()));
    buf.append(t.name);
    put_u32(buf, static_cast<std::uint32_t>(t.dims.size()));
    for (auto d : t.dims) put_u32(buf, d);
    for (double v : t.values) put_f64(buf, v);
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("checkpoint: cannot open " + path);
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!out) throw std::runtime_error("checkpoint: write failed for " + path);
}

std::vector<CheckpointTensor> read_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("checkpoint: cannot open " + path);
  std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  Reader r{reinterpret_cast<const unsigned char*>(data.data()),
           reinterpret_cast<const unsigned char*>(data.data()) + data.size(), path};
  r.need(5);
  if (std::memcmp(r.p, kMagic, 4) != 0) {
    throw std::runtime_error("checkpoint: bad magic in " + path);
  }
  r.p += 4;
  const unsigned char version = *r.p++;
  if (version != kVersion) {
    throw std::runtime_error("checkpoint: unsupported version " +
                             std::to_string(version) + " in " + path);
  }
  const std::uint32_t count = r.u32();
  std::vector<CheckpointTensor> tensors;
  tensors.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    CheckpointTensor t;
    const std::uint16_t name_len = r.u16();
    r.need(name_len);
    t.name.assign(reinterpret_cast<const char*>(r.p), name_len);
    r.p += name_len;
    const std::uint32_t ndims = r.u32();
    std::size_t total = 1;
    for (std::uint32_t d = 0; d < ndims; ++d) {
      t.dims.push_back(r.u32());
      total *= t.dims.back();
    }
    t.values.resize(total);
    for (std::size_t v = 0; v < total; ++v) t.values[v] = r.f64();
    tensors.push_back(std::move(t));
  }
  return tensors;
}

void save_net(const std::string& path, nn::Net& net,
              const std::map<std::string, double>& scalars) {
  std::vector<CheckpointTensor> tensors;
  for (const auto& b : net.param_blocks()) {
    CheckpointTensor t;
    t.name = b.name;
    t.dims = {static_cast<std::uint32_t>(b.values.size())};
    t.values.assign(b.values.begin(), b.values.end());
    tensors.push_back(std::move(t));
  }
  for (const auto& [k, v] : scalars) {
    tensors.push_back({"meta." + k, {1}, {v}});
  }
  write_checkpoint(path, tensors);
}

std::map<std::string, double> load_net(const std::string& path, nn::Net& net) {
  const auto tensors = read_checkpoint(path);
  std::map<std::string, double> scalars;
  std::map<std::string, const CheckpointTensor*> by_name;
  for (const auto& t : tensors) {
    if (t.name.rfind("meta.", 0) == 0) {
      if (t.values.size() != 1) throw std::runtime_error("checkpoint: bad meta " + t.name);
      scalars[t.name.substr(5)] = t.values[0];
    } else {
      by_name[t.name] = &t;
    }
  }
  for (auto& b : net.param_blocks()) {
    const auto it = by_name.find(b.name);
    if (it == by_name.end()) {
      throw std::runtime_error("checkpoint: missing tensor " + b.name + " in " + path);
    }
    if (it->second->values.size() != b.values.size()) {
      throw std::runtime_error("checkpoint: size mismatch for " + b.name + " in " + path);
    }
    std::copy(it->second->values.begin(), it->second->values.end(), b.values.begin());
  }
  return scalars;
}

}  // namespace uqcov
