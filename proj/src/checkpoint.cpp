// SPDX-License-Identifier: Apache-2.0
#include "qroute/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "qroute/errors.hpp"

namespace qroute {
namespace {

constexpr char kMagic[4] = {'Q', 'R', 'C', 'K'};
constexpr std::uint32_t kVersion = 1;

// Explicit little-endian writers; the format must not depend on host
// byte order.
void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i)
    out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i)
    out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
void put_f32(std::string& out, float f) {
  put_u32(out, std::bit_cast<std::uint32_t>(f));
}

class Reader {
public:
  Reader(std::string data, std::string path)
      : data_(std::move(data)), path_(std::move(path)) {}

  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i)
      v |= static_cast<std::uint32_t>(
               static_cast<unsigned char>(data_[pos_ + static_cast<std::size_t>(i)]))
           << (8 * i);
    pos_ += 4;
    return v;
  }
  std::uint64_t u64(const char* what) {
    need(8, what);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i)
      v |= static_cast<std::uint64_t>(
               static_cast<unsigned char>(data_[pos_ + static_cast<std::size_t>(i)]))
           << (8 * i);
    pos_ += 8;
    return v;
  }
  std::uint8_t u8(const char* what) {
    need(1, what);
    return static_cast<std::uint8_t>(data_[pos_++]);
  }
  float f32(const char* what) { return std::bit_cast<float>(u32(what)); }
  std::string bytes(std::size_t n, const char* what) {
    need(n, what);
    std::string s = data_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  void f32_array(std::vector<float>& out, std::size_t n, const char* what) {
    out.resize(n);
    for (std::size_t i = 0; i < n; ++i) out[i] = f32(what);
  }
  bool done() const { return pos_ == data_.size(); }

private:
  void need(std::size_t n, const char* what) {
    if (pos_ + n > data_.size())
      throw ConfigError("checkpoint '" + path_ + "': truncated at " + what);
  }
  std::string data_;
  std::string path_;
  std::size_t pos_ = 0;
};

void append_entry(std::string& out, const Checkpoint::Entry& e) {
  out.push_back(e.is_buffer ? 1 : 0);
  put_u32(out, static_cast<std::uint32_t>(e.name.size()));
  out += e.name;
  put_u32(out, static_cast<std::uint32_t>(e.shape.size()));
  for (auto d : e.shape) put_u64(out, static_cast<std::uint64_t>(d));
  for (float f : e.data) put_f32(out, f);
}

}  // namespace

Checkpoint make_checkpoint(const ParamRegistry& reg,
                           const std::string& config_text, std::uint64_t step,
                           const Adam* opt) {
  Checkpoint ck;
  ck.config_text = config_text;
  ck.step = step;
  auto snap = [&](const NamedTensor& nt, bool is_buffer) {
    Checkpoint::Entry e;
    e.is_buffer = is_buffer;
    e.name = nt.name;
    e.shape = nt.tensor.shape();
    e.data.reserve(static_cast<std::size_t>(nt.tensor.numel()));
    for (double v : nt.tensor.data()) e.data.push_back(static_cast<float>(v));
    ck.entries.push_back(std::move(e));
  };
  for (const auto& p : reg.params()) snap(p, false);
  for (const auto& b : reg.buffers()) snap(b, true);
  if (opt) {
    ck.has_optimizer = true;
    ck.adam_t = opt->t();
    for (std::size_t i = 0; i < opt->size(); ++i) {
      std::vector<float> m(opt->m(i).begin(), opt->m(i).end());
      std::vector<float> v(opt->v(i).begin(), opt->v(i).end());
      ck.adam_m.push_back(std::move(m));
      ck.adam_v.push_back(std::move(v));
    }
  }
  return ck;
}

void save_checkpoint(const std::string& path, const Checkpoint& ck) {
  std::string out;
  out.append(kMagic, 4);
  put_u32(out, kVersion);
  put_u64(out, ck.config_text.size());
  out += ck.config_text;
  put_u64(out, ck.step);
  put_u32(out, static_cast<std::uint32_t>(ck.entries.size()));
  for (const auto& e : ck.entries) append_entry(out, e);
  out.push_back(ck.has_optimizer ? 1 : 0);
  if (ck.has_optimizer) {
    put_u64(out, ck.adam_t);
    for (std::size_t i = 0; i < ck.adam_m.size(); ++i) {
      for (float f : ck.adam_m[i]) put_f32(out, f);
      for (float f : ck.adam_v[i]) put_f32(out, f);
    }
  }
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw ConfigError("cannot open '" + path + "' for writing");
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw ConfigError("short write to '" + path + "'");
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot open checkpoint '" + path + "'");
  std::string data((std::istreambuf_iterator<char>(f)),
                   std::istreambuf_iterator<char>());
  Reader r(std::move(data), path);
  if (r.bytes(4, "magic") != std::string(kMagic, 4))
    throw ConfigError("checkpoint '" + path + "': bad magic");
  std::uint32_t ver = r.u32("version");
  if (ver != kVersion)
    throw ConfigError("checkpoint '" + path + "': unsupported version " +
                      std::to_string(ver));
  Checkpoint ck;
  ck.config_text = r.bytes(r.u64("config length"), "config text");
  ck.step = r.u64("step");
  std::uint32_t n = r.u32("entry count");
  std::size_t n_params = 0;
  for (std::uint32_t i = 0; i < n; ++i) {
    Checkpoint::Entry e;
    e.is_buffer = r.u8("entry kind") != 0;
    if (!e.is_buffer) ++n_params;
    e.name = r.bytes(r.u32("name length"), "entry name");
    std::uint32_t nd = r.u32("entry rank");
    std::int64_t numel = 1;
    for (std::uint32_t d = 0; d < nd; ++d) {
      e.shape.push_back(static_cast<std::int64_t>(r.u64("entry dim")));
      numel *= e.shape.back();
    }
    r.f32_array(e.data, static_cast<std::size_t>(numel), "entry data");
    ck.entries.push_back(std::move(e));
  }
  ck.has_optimizer = r.u8("optimizer flag") != 0;
  if (ck.has_optimizer) {
    ck.adam_t = r.u64("adam step");
    for (const auto& e : ck.entries) {
      if (e.is_buffer) continue;
      std::vector<float> m, v;
      r.f32_array(m, e.data.size(), "adam m");
      r.f32_array(v, e.data.size(), "adam v");
      ck.adam_m.push_back(std::move(m));
      ck.adam_v.push_back(std::move(v));
    }
  }
  if (!r.done())
    throw ConfigError("checkpoint '" + path + "': trailing bytes");
  return ck;
}

void apply_checkpoint(const Checkpoint& ck, ParamRegistry& reg, Adam* opt) {
  std::vector<std::string> missing, unexpected, mismatched;
  auto find_entry = [&](const std::string& name) -> const Checkpoint::Entry* {
    for (const auto& e : ck.entries)
      if (e.name == name) return &e;
    return nullptr;
  };
  auto restore = [&](const NamedTensor& nt) {
    const Checkpoint::Entry* e = find_entry(nt.name);
    if (!e) {
      missing.push_back(nt.name);
      return;
    }
    if (e->shape != nt.tensor.shape()) {
      mismatched.push_back(nt.name + " " + shape_str(e->shape) + " vs " +
                           shape_str(nt.tensor.shape()));
      return;
    }
    Tensor t = nt.tensor;
    auto td = t.data();
    for (std::size_t i = 0; i < e->data.size(); ++i)
      td[i] = static_cast<double>(e->data[i]);
  };
  for (const auto& p : reg.params()) restore(p);
  for (const auto& b : reg.buffers()) restore(b);
  for (const auto& e : ck.entries) {
    bool known = false;
    for (const auto& p : reg.params()) known = known || p.name == e.name;
    for (const auto& b : reg.buffers()) known = known || b.name == e.name;
    if (!known) unexpected.push_back(e.name);
  }
  if (!missing.empty() || !unexpected.empty() || !mismatched.empty()) {
    std::string msg = "checkpoint does not match model:";
    for (const auto& s : missing) msg += "\n  missing: " + s;
    for (const auto& s : unexpected) msg += "\n  unexpected: " + s;
    for (const auto& s : mismatched) msg += "\n  shape mismatch: " + s;
    throw ConfigError(msg);
  }
  if (opt && ck.has_optimizer) {
    // Moment arrays follow checkpoint param order; require that it
    // matches registry order so state cannot silently misalign.
    std::size_t pi = 0;
    for (const auto& e : ck.entries) {
      if (e.is_buffer) continue;
      if (pi >= reg.params().size() || reg.params()[pi].name != e.name)
        throw ConfigError("checkpoint parameter order differs at '" + e.name +
                          "'; optimizer state cannot be restored");
      ++pi;
    }
    std::vector<std::vector<double>> m, v;
    for (std::size_t i = 0; i < ck.adam_m.size(); ++i) {
      m.emplace_back(ck.adam_m[i].begin(), ck.adam_m[i].end());
      v.emplace_back(ck.adam_v[i].begin(), ck.adam_v[i].end());
    }
    opt->set_state(ck.adam_t, std::move(m), std::move(v));
  }
}

}  // namespace qroute
