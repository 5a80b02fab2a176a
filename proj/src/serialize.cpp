#include "mpac/serialize.hpp"

#include <cstring>
#include <fstream>

#include "mpac/errors.hpp"

namespace mpac {

namespace {

constexpr char kMagic[8] = {'M', 'P', 'A', 'C', 'B', 'I', 'N', '1'};

enum : std::uint8_t { kTagArray = 0, kTagString = 1, kTagU64 = 2 };

void put_u8(std::ostream& os, std::uint8_t v) {
  os.put(static_cast<char>(v));
}

void put_u32(std::ostream& os, std::uint32_t v) {
  char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  os.write(b, 4);
}

void put_u64(std::ostream& os, std::uint64_t v) {
  char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  os.write(b, 8);
}

void put_f64(std::ostream& os, double d) {
  std::uint64_t bits;
  std::memcpy(&bits, &d, sizeof bits);
  put_u64(os, bits);
}

std::uint8_t get_u8(std::istream& is) {
  int c = is.get();
  if (c == EOF) throw ParseError("container truncated");
  return static_cast<std::uint8_t>(c);
}

std::uint32_t get_u32(std::istream& is) {
  char b[4];
  if (!is.read(b, 4)) throw ParseError("container truncated");
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i)
    v |= static_cast<std::uint32_t>(static_cast<unsigned char>(b[i])) << (8 * i);
  return v;
}

std::uint64_t get_u64(std::istream& is) {
  char b[8];
  if (!is.read(b, 8)) throw ParseError("container truncated");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i)
    v |= static_cast<std::uint64_t>(static_cast<unsigned char>(b[i])) << (8 * i);
  return v;
}

double get_f64(std::istream& is) {
  std::uint64_t bits = get_u64(is);
  double d;
  std::memcpy(&d, &bits, sizeof d);
  return d;
}

void put_str(std::ostream& os, const std::string& s) {
  put_u32(os, static_cast<std::uint32_t>(s.size()));
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string get_str(std::istream& is) {
  std::uint32_t n = get_u32(is);
  std::string s(n, '\0');
  if (n && !is.read(s.data(), n)) throw ParseError("container truncated");
  return s;
}

}  // namespace

void save_container(const Container& c, std::ostream& os) {
  os.write(kMagic, sizeof kMagic);
  put_u32(os, static_cast<std::uint32_t>(c.size()));
  for (const auto& [name, value] : c) {
    put_str(os, name);
    if (const auto* arr = std::get_if<ArrayEntry>(&value)) {
      put_u8(os, kTagArray);
      put_u32(os, static_cast<std::uint32_t>(arr->shape.size()));
      std::size_t expect = 1;
      for (std::uint32_t d : arr->shape) {
        put_u32(os, d);
        expect *= d;
      }
      if (expect != arr->data.size())
        throw InvalidArgument("save_container: shape/data mismatch for '" + name + "'");
      for (double d : arr->data) put_f64(os, d);
    } else if (const auto* str = std::get_if<std::string>(&value)) {
      put_u8(os, kTagString);
      put_str(os, *str);
    } else {
      put_u8(os, kTagU64);
      put_u64(os, std::get<std::uint64_t>(value));
    }
  }
  if (!os) throw IoError("save_container: write failed");
}

Container load_container(std::istream& is) {
  char magic[sizeof kMagic];
  if (!is.read(magic, sizeof magic) || std::memcmp(magic, kMagic, sizeof kMagic) != 0)
    throw ParseError("not an MPACBIN1 container");
  Container c;
  const std::uint32_t n = get_u32(is);
  for (std::uint32_t i = 0; i < n; ++i) {
    std::string name = get_str(is);
    std::uint8_t tag = get_u8(is);
    if (tag == kTagArray) {
      ArrayEntry arr;
      const std::uint32_t ndim = get_u32(is);
      std::size_t count = 1;
      for (std::uint32_t d = 0; d < ndim; ++d) {
        arr.shape.push_back(get_u32(is));
        count *= arr.shape.back();
      }
      arr.data.resize(count);
      for (std::size_t k = 0; k < count; ++k) arr.data[k] = get_f64(is);
      c.emplace(std::move(name), std::move(arr));
    } else if (tag == kTagString) {
      c.emplace(std::move(name), get_str(is));
    } else if (tag == kTagU64) {
      c.emplace(std::move(name), get_u64(is));
    } else {
      throw ParseError("container: unknown entry tag");
    }
  }
  return c;
}

void save_container(const Container& c, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open '" + path + "' for writing");
  save_container(c, f);
  f.close();
  if (!f) throw IoError("write to '" + path + "' failed");
}

Container load_container(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open '" + path + "' for reading");
  return load_container(f);
}

namespace {

ArrayEntry mat_entry(const Mat& m) {
  ArrayEntry e;
  e.shape = {static_cast<std::uint32_t>(m.rows()), static_cast<std::uint32_t>(m.cols())};
  e.data.reserve(static_cast<std::size_t>(m.size()));
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) e.data.push_back(m(r, c));
  return e;
}

ArrayEntry vec_entry(const Vec& v) {
  ArrayEntry e;
  e.shape = {static_cast<std::uint32_t>(v.size())};
  e.data.assign(v.data(), v.data() + v.size());
  return e;
}

const ArrayEntry& need_array(const Container& c, const std::string& key) {
  auto it = c.find(key);
  if (it == c.end()) throw ParseError("container missing entry '" + key + "'");
  const auto* arr = std::get_if<ArrayEntry>(&it->second);
  if (!arr) throw ParseError("container entry '" + key + "' is not an array");
  return *arr;
}

std::uint64_t need_u64(const Container& c, const std::string& key) {
  auto it = c.find(key);
  if (it == c.end()) throw ParseError("container missing entry '" + key + "'");
  const auto* v = std::get_if<std::uint64_t>(&it->second);
  if (!v) throw ParseError("container entry '" + key + "' is not a u64");
  return *v;
}

std::string need_str(const Container& c, const std::string& key) {
  auto it = c.find(key);
  if (it == c.end()) throw ParseError("container missing entry '" + key + "'");
  const auto* v = std::get_if<std::string>(&it->second);
  if (!v) throw ParseError("container entry '" + key + "' is not a string");
  return *v;
}

Mat array_to_mat(const ArrayEntry& e, const std::string& key) {
  if (e.shape.size() != 2) throw ParseError("entry '" + key + "' is not 2-d");
  Mat m(e.shape[0], e.shape[1]);
  std::size_t k = 0;
  for (std::uint32_t r = 0; r < e.shape[0]; ++r)
    for (std::uint32_t c = 0; c < e.shape[1]; ++c) m(r, c) = e.data[k++];
  return m;
}

Vec array_to_vec(const ArrayEntry& e, const std::string& key) {
  if (e.shape.size() != 1) throw ParseError("entry '" + key + "' is not 1-d");
  return Eigen::Map<const Vec>(e.data.data(), static_cast<Eigen::Index>(e.data.size()));
}

std::vector<Layer> layers_from_container(const Container& c, const std::string& prefix) {
  const std::uint64_t n = need_u64(c, prefix + "layers");
  std::vector<Layer> layers;
  for (std::uint64_t i = 0; i < n; ++i) {
    const std::string base = prefix + "layer" + std::to_string(i) + ".";
    Layer l;
    l.weight = array_to_mat(need_array(c, base + "weight"), base + "weight");
    l.bias = array_to_vec(need_array(c, base + "bias"), base + "bias");
    layers.push_back(std::move(l));
  }
  return layers;
}

void layers_to_container(const std::vector<Layer>& layers, const std::string& prefix,
                         Container& out) {
  out[prefix + "layers"] = static_cast<std::uint64_t>(layers.size());
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const std::string base = prefix + "layer" + std::to_string(i) + ".";
    out[base + "weight"] = mat_entry(layers[i].weight);
    out[base + "bias"] = vec_entry(layers[i].bias);
  }
}

}  // namespace

void paramset_to_container(const ParamSet& params, const std::string& prefix,
                           Container& out) {
  layers_to_container(params.layers, prefix, out);
  out[prefix + "activation"] = std::string("relu");
  out[prefix + "seed"] = params.seed;
}

ParamSet paramset_from_container(const Container& c, const std::string& prefix) {
  ParamSet p;
  p.layers = layers_from_container(c, prefix);
  if (p.layers.empty()) throw ParseError("paramset '" + prefix + "' has no layers");
  const std::string act = need_str(c, prefix + "activation");
  if (act != "relu") throw ParseError("unknown activation '" + act + "'");
  p.hidden_activation = Activation::Relu;
  p.seed = need_u64(c, prefix + "seed");
  return p;
}

bool container_has_paramset(const Container& c, const std::string& prefix) {
  return c.count(prefix + "layers") > 0;
}

void optimizer_to_container(const OptimizerState& opt, const std::string& prefix,
                            Container& out) {
  out[prefix + "kind"] = std::string(opt.kind == OptKind::Adam ? "adam" : "sgd");
  ArrayEntry scalars;
  scalars.shape = {4};
  scalars.data = {opt.lr, opt.beta1, opt.beta2, opt.eps};
  out[prefix + "scalars"] = std::move(scalars);
  out[prefix + "step"] = opt.step;
  if (opt.kind == OptKind::Adam) {
    layers_to_container(opt.m, prefix + "m.", out);
    layers_to_container(opt.v, prefix + "v.", out);
  }
}

OptimizerState optimizer_from_container(const Container& c, const std::string& prefix) {
  OptimizerState opt;
  const std::string kind = need_str(c, prefix + "kind");
  if (kind == "adam")
    opt.kind = OptKind::Adam;
  else if (kind == "sgd")
    opt.kind = OptKind::Sgd;
  else
    throw ParseError("unknown optimizer kind '" + kind + "'");
  const ArrayEntry& s = need_array(c, prefix + "scalars");
  if (s.data.size() != 4) throw ParseError("bad optimizer scalars");
  opt.lr = s.data[0];
  opt.beta1 = s.data[1];
  opt.beta2 = s.data[2];
  opt.eps = s.data[3];
  opt.step = need_u64(c, prefix + "step");
  if (opt.kind == OptKind::Adam) {
    opt.m = layers_from_container(c, prefix + "m.");
    opt.v = layers_from_container(c, prefix + "v.");
  }
  return opt;
}

void save_params(const ParamSet& params, const std::string& path) {
  Container c;
  paramset_to_container(params, "net.", c);
  save_container(c, path);
}

ParamSet load_params(const std::string& path) {
  return paramset_from_container(load_container(path), "net.");
}

}  // namespace mpac
