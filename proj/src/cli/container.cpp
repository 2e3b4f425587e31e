#include "gma3d/cli/container.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>
#include <set>

#include "gma3d/errors.hpp"

namespace gma3d::cli {

namespace {

constexpr char kMagic[4] = {'G', 'T', 'C', '1'};

void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v & 0xFF));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xFF));
}

class Reader {
 public:
  explicit Reader(const std::vector<std::uint8_t>& bytes) : bytes_(bytes) {}

  void need(std::size_t n, const char* what) const {
    if (bytes_.size() - pos_ < n) {
      throw IoError(std::string("container truncated while reading ") + what + " at byte " +
                    std::to_string(pos_));
    }
  }
  std::uint16_t u16(const char* what) {
    need(2, what);
    const std::uint16_t v = static_cast<std::uint16_t>(bytes_[pos_] | (bytes_[pos_ + 1] << 8));
    pos_ += 2;
    return v;
  }
  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
  }
  std::string str(std::size_t n, const char* what) {
    need(n, what);
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == bytes_.size(); }
  std::size_t pos() const { return pos_; }

 private:
  const std::vector<std::uint8_t>& bytes_;
  std::size_t pos_ = 0;
};

DenseArray vector_tensor(const std::vector<double>& v) {
  return DenseArray({v.size()}, v);
}

}  // namespace

std::vector<std::uint8_t> encode_container(const NamedTensors& tensors) {
  if (tensors.size() > std::numeric_limits<std::uint32_t>::max()) {
    throw ParameterError("container: too many tensors");
  }
  std::set<std::string> seen;
  std::vector<std::uint8_t> out(std::begin(kMagic), std::end(kMagic));
  put_u32(out, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& [name, a] : tensors) {
    if (!seen.insert(name).second) throw ParameterError("container: duplicate tensor '" + name + "'");
    if (name.size() > std::numeric_limits<std::uint16_t>::max()) {
      throw ParameterError("container: tensor name too long");
    }
    put_u16(out, static_cast<std::uint16_t>(name.size()));
    out.insert(out.end(), name.begin(), name.end());
    put_u32(out, static_cast<std::uint32_t>(a.rank()));
    for (std::size_t d : a.shape()) {
      if (d > std::numeric_limits<std::uint32_t>::max()) {
        throw ParameterError("container: dimension of '" + name + "' too large");
      }
      put_u32(out, static_cast<std::uint32_t>(d));
    }
    for (double x : a.data()) put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(x)));
  }
  return out;
}

NamedTensors decode_container(const std::vector<std::uint8_t>& bytes) {
  Reader r(bytes);
  if (r.str(4, "magic") != std::string(kMagic, 4)) throw IoError("not a GTC1 container");
  const std::uint32_t count = r.u32("tensor count");
  NamedTensors out;
  std::set<std::string> seen;
  for (std::uint32_t t = 0; t < count; ++t) {
    const std::uint16_t len = r.u16("name length");
    std::string name = r.str(len, "name");
    if (!seen.insert(name).second) throw IoError("container: duplicate tensor '" + name + "'");
    const std::uint32_t rank = r.u32("rank");
    numkern::Shape shape;
    std::size_t count_values = 1;
    for (std::uint32_t d = 0; d < rank; ++d) {
      shape.push_back(r.u32("dims"));
      count_values *= shape.back();
      if (count_values > bytes.size()) throw IoError("container: payload of '" + name + "' truncated");
    }
    r.need(count_values * 4, "payload");
    std::vector<double> values(count_values);
    for (auto& v : values) {
      v = static_cast<double>(std::bit_cast<float>(r.u32("payload")));
      if (!std::isfinite(v)) throw IoError("container: non-finite value in '" + name + "'");
    }
    try {
      out.emplace_back(std::move(name), DenseArray(std::move(shape), std::move(values)));
    } catch (const std::exception& e) {
      throw IoError(std::string("container: ") + e.what());
    }
  }
  if (!r.done()) {
    throw IoError("container has trailing bytes after byte " + std::to_string(r.pos()));
  }
  return out;
}

void write_container(const std::filesystem::path& path, const NamedTensors& tensors) {
  const auto bytes = encode_container(tensors);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open '" + path.string() + "' for writing");
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw IoError("write to '" + path.string() + "' failed");
}

NamedTensors read_container(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open '" + path.string() + "'");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)),
                                  std::istreambuf_iterator<char>());
  if (f.bad()) throw IoError("read from '" + path.string() + "' failed");
  return decode_container(bytes);
}

const DenseArray& find_tensor(const NamedTensors& tensors, const std::string& name) {
  for (const auto& [n, a] : tensors) {
    if (n == name) return a;
  }
  throw IoError("container lacks tensor '" + name + "'");
}

DenseArray round_to_float(const DenseArray& a) {
  std::vector<double> v(a.data().begin(), a.data().end());
  for (auto& x : v) x = static_cast<double>(static_cast<float>(x));
  return DenseArray(a.shape(), std::move(v));
}

NamedTensors scene_to_tensors(const synthgen::SyntheticScene& scene) {
  std::vector<double> mask, cluster;
  for (bool b : scene.occlusion_mask) mask.push_back(b ? 1.0 : 0.0);
  for (std::size_t c : scene.cluster_id) cluster.push_back(static_cast<double>(c));
  return {
      {"frame1", scene.frame1.to_array()},
      {"frame2", scene.frame2.to_array()},
      {"gt_flow", scene.gt_flow.to_array()},
      {"occlusion_mask", vector_tensor(mask)},
      {"cluster_id", vector_tensor(cluster)},
      {"context", scene.context},
      {"motion_in", scene.motion_in},
  };
}

synthgen::SyntheticScene scene_from_tensors(const NamedTensors& tensors) {
  try {
    synthgen::SyntheticScene s{
        spatial::PointCloud::from_array(find_tensor(tensors, "frame1")),
        spatial::PointCloud::from_array(find_tensor(tensors, "frame2")),
        flowmetrics::FlowField::from_array(find_tensor(tensors, "gt_flow")),
        {},
        {},
        find_tensor(tensors, "context"),
        find_tensor(tensors, "motion_in")};
    const std::size_t n = s.frame1.size();
    const auto& mask = find_tensor(tensors, "occlusion_mask");
    const auto& cluster = find_tensor(tensors, "cluster_id");
    if (mask.size() != n || cluster.size() != n || s.gt_flow.size() != n ||
        s.context.rows() != n || s.motion_in.rows() != n) {
      throw IoError("scene container: per-point tensors disagree on N");
    }
    for (double m : mask.data()) {
      if (m != 0.0 && m != 1.0) throw IoError("scene container: occlusion_mask must be 0/1");
      s.occlusion_mask.push_back(m == 1.0);
    }
    for (double c : cluster.data()) {
      if (c < 0.0 || c != std::floor(c)) throw IoError("scene container: bad cluster_id");
      s.cluster_id.push_back(static_cast<std::size_t>(c));
    }
    return s;
  } catch (const IoError&) {
    throw;
  } catch (const std::exception& e) {
    throw IoError(std::string("scene container: ") + e.what());
  }
}

}  // namespace gma3d::cli
