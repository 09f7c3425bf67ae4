#include "mvfuse/io.hpp"

#include "mvfuse/error.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

namespace mvfuse::io {

namespace fs = std::filesystem;

namespace {

static_assert(std::endian::native == std::endian::little, "binary PLY/STL I/O assumes a little-endian host");

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return std::move(ss).str();
}

std::ofstream open_out(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  return out;
}

std::string fmt_double(double v, int digits) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.*g", digits, v);
  return buf;
}

// ---------------------------------------------------------------- PLY

enum class PlyType { Int8, UInt8, Int16, UInt16, Int32, UInt32, Float32, Float64 };

std::optional<PlyType> parse_ply_type(const std::string& s) {
  static const std::map<std::string, PlyType> table = {
      {"char", PlyType::Int8},     {"int8", PlyType::Int8},       {"uchar", PlyType::UInt8},
      {"uint8", PlyType::UInt8},   {"short", PlyType::Int16},     {"int16", PlyType::Int16},
      {"ushort", PlyType::UInt16}, {"uint16", PlyType::UInt16},   {"int", PlyType::Int32},
      {"int32", PlyType::Int32},   {"uint", PlyType::UInt32},     {"uint32", PlyType::UInt32},
      {"float", PlyType::Float32}, {"float32", PlyType::Float32}, {"double", PlyType::Float64},
      {"float64", PlyType::Float64}};
  auto it = table.find(s);
  if (it == table.end()) return std::nullopt;
  return it->second;
}

struct PlyProperty {
  std::string name;
  PlyType type = PlyType::Float32;
  bool is_list = false;
  PlyType count_type = PlyType::UInt8;
};

struct PlyElement {
  std::string name;
  std::size_t count = 0;
  std::vector<PlyProperty> properties;
};

struct PlyHeader {
  bool binary = false;
  std::vector<PlyElement> elements;
  std::size_t data_offset = 0;
};

PlyHeader parse_ply_header(const std::string& data, const fs::path& path) {
  PlyHeader header;
  std::size_t pos = 0;
  auto next_line = [&](std::string& line) -> bool {
    if (pos >= data.size()) return false;
    const std::size_t nl = data.find('\n', pos);
    const std::size_t end = nl == std::string::npos ? data.size() : nl;
    line.assign(data, pos, end - pos);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    pos = nl == std::string::npos ? data.size() : nl + 1;
    return true;
  };
  auto fail = [&](const std::string& msg, std::size_t offset) {
    throw Error(ErrorCode::ParseError, path.string() + ": " + msg + " at byte " + std::to_string(offset));
  };

  std::string line;
  if (!next_line(line) || line != "ply") fail("missing 'ply' magic", 0);
  bool have_format = false;
  bool ended = false;
  while (true) {
    const std::size_t line_start = pos;
    if (!next_line(line)) break;
    std::istringstream ls(line);
    std::string key;
    ls >> key;
    if (key.empty() || key == "comment" || key == "obj_info") continue;
    if (key == "format") {
      std::string fmt;
      ls >> fmt;
      if (fmt == "ascii") header.binary = false;
      else if (fmt == "binary_little_endian") header.binary = true;
      else fail("unsupported format '" + fmt + "'", line_start);
      have_format = true;
    } else if (key == "element") {
      PlyElement el;
      long long count = -1;
      ls >> el.name >> count;
      if (el.name.empty() || count < 0) fail("malformed element line", line_start);
      el.count = static_cast<std::size_t>(count);
      header.elements.push_back(std::move(el));
    } else if (key == "property") {
      if (header.elements.empty()) fail("property before any element", line_start);
      PlyProperty prop;
      std::string type;
      ls >> type;
      if (type == "list") {
        std::string ct, it;
        ls >> ct >> it >> prop.name;
        auto c = parse_ply_type(ct);
        auto i = parse_ply_type(it);
        if (!c || !i) fail("unknown list property type", line_start);
        prop.is_list = true;
        prop.count_type = *c;
        prop.type = *i;
      } else {
        auto t = parse_ply_type(type);
        ls >> prop.name;
        if (!t || prop.name.empty()) fail("unknown property type '" + type + "'", line_start);
        prop.type = *t;
      }
      header.elements.back().properties.push_back(std::move(prop));
    } else if (key == "end_header") {
      ended = true;
      break;
    } else {
      fail("unexpected header keyword '" + key + "'", line_start);
    }
  }
  if (!have_format) fail("missing format line", pos);
  if (!ended) fail("missing end_header", pos);
  header.data_offset = pos;
  return header;
}

class PlyReader {
 public:
  PlyReader(const std::string& data, std::size_t offset, bool binary, const fs::path& path)
      : data_(data), pos_(offset), binary_(binary), path_(path) {}

  double read(PlyType t) { return binary_ ? read_binary(t) : read_ascii(); }

  void skip_element(const PlyElement& el) {
    for (std::size_t i = 0; i < el.count; ++i) {
      for (const auto& p : el.properties) {
        if (p.is_list) {
          const auto n = static_cast<std::size_t>(read(p.count_type));
          for (std::size_t k = 0; k < n; ++k) read(p.type);
        } else {
          read(p.type);
        }
      }
    }
  }

  std::size_t position() const { return pos_; }

 private:
  [[noreturn]] void fail(const std::string& msg) const {
    throw Error(ErrorCode::ParseError, path_.string() + ": " + msg + " at byte " + std::to_string(pos_));
  }

  template <typename T>
  double take() {
    if (pos_ + sizeof(T) > data_.size()) fail("unexpected end of vertex data");
    T v;
    std::memcpy(&v, data_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return static_cast<double>(v);
  }

  double read_binary(PlyType t) {
    switch (t) {
      case PlyType::Int8: return take<std::int8_t>();
      case PlyType::UInt8: return take<std::uint8_t>();
      case PlyType::Int16: return take<std::int16_t>();
      case PlyType::UInt16: return take<std::uint16_t>();
      case PlyType::Int32: return take<std::int32_t>();
      case PlyType::UInt32: return take<std::uint32_t>();
      case PlyType::Float32: return take<float>();
      case PlyType::Float64: return take<double>();
    }
    fail("bad type");
  }

  double read_ascii() {
    while (pos_ < data_.size() && std::isspace(static_cast<unsigned char>(data_[pos_]))) ++pos_;
    if (pos_ >= data_.size()) fail("unexpected end of vertex data");
    std::size_t end = pos_;
    while (end < data_.size() && !std::isspace(static_cast<unsigned char>(data_[end]))) ++end;
    double v = 0.0;
    const auto res = std::from_chars(data_.data() + pos_, data_.data() + end, v);
    if (res.ec != std::errc() || res.ptr != data_.data() + end) fail("malformed number");
    pos_ = end;
    return v;
  }

  const std::string& data_;
  std::size_t pos_;
  bool binary_;
  const fs::path& path_;
};

struct VertexColumns {
  std::vector<std::vector<double>> columns;  // one per scalar property
  PlyElement element;
};

VertexColumns read_vertex_columns(const fs::path& path) {
  const std::string data = slurp(path);
  const PlyHeader header = parse_ply_header(data, path);
  PlyReader reader(data, header.data_offset, header.binary, path);
  for (const auto& el : header.elements) {
    if (el.name != "vertex") {
      reader.skip_element(el);
      continue;
    }
    VertexColumns out;
    out.element = el;
    out.columns.assign(el.properties.size(), {});
    for (auto& c : out.columns) c.reserve(el.count);
    for (std::size_t i = 0; i < el.count; ++i) {
      for (std::size_t p = 0; p < el.properties.size(); ++p) {
        const auto& prop = el.properties[p];
        if (prop.is_list) {
          const auto n = static_cast<std::size_t>(reader.read(prop.count_type));
          for (std::size_t k = 0; k < n; ++k) reader.read(prop.type);
          out.columns[p].push_back(0.0);
        } else {
          out.columns[p].push_back(reader.read(prop.type));
        }
      }
    }
    return out;
  }
  throw Error(ErrorCode::ParseError, path.string() + ": missing element vertex at byte " +
                                         std::to_string(header.data_offset));
}

int column_of(const PlyElement& el, const std::string& name) {
  for (std::size_t i = 0; i < el.properties.size(); ++i) {
    if (el.properties[i].name == name && !el.properties[i].is_list) return static_cast<int>(i);
  }
  return -1;
}

}  // namespace

PointCloud read_ply(const fs::path& path) {
  const VertexColumns cols = read_vertex_columns(path);
  const PlyElement& el = cols.element;
  const int ix = column_of(el, "x"), iy = column_of(el, "y"), iz = column_of(el, "z");
  if (ix < 0 || iy < 0 || iz < 0)
    throw Error(ErrorCode::ParseError, path.string() + ": vertex element lacks x/y/z properties");
  const int inx = column_of(el, "nx"), iny = column_of(el, "ny"), inz = column_of(el, "nz");
  const bool normals = inx >= 0 && iny >= 0 && inz >= 0;

  PointCloud cloud;
  cloud.points.resize(el.count);
  if (normals) cloud.normals.resize(el.count);
  for (std::size_t i = 0; i < el.count; ++i) {
    cloud.points[i] = {cols.columns[ix][i], cols.columns[iy][i], cols.columns[iz][i]};
    if (normals) {
      Vec3 n{cols.columns[inx][i], cols.columns[iny][i], cols.columns[inz][i]};
      const double len = n.norm();
      cloud.normals[i] = len > 0.0 ? Vec3(n / len) : Vec3::UnitZ();
    }
  }
  return cloud;
}

std::optional<std::vector<double>> read_ply_scalar(const fs::path& path, const std::string& name) {
  const VertexColumns cols = read_vertex_columns(path);
  const int idx = column_of(cols.element, name);
  if (idx < 0) return std::nullopt;
  return cols.columns[idx];
}

void write_ply(const fs::path& path, const PointCloud& cloud, const PlyWriteOptions& options,
               const std::vector<double>* scalar_field, const std::string& scalar_name) {
  if (scalar_field && scalar_field->size() != cloud.size())
    throw Error(ErrorCode::SizeMismatch, "scalar field length differs from point count");
  const bool normals = cloud.has_normals();
  const bool f64 = options.scalar == PlyScalar::Float64;
  const char* type = f64 ? "double" : "float";

  std::ostringstream head;
  head << "ply\n"
       << "format " << (options.encoding == PlyEncoding::Ascii ? "ascii" : "binary_little_endian") << " 1.0\n"
       << "element vertex " << cloud.size() << "\n"
       << "property " << type << " x\nproperty " << type << " y\nproperty " << type << " z\n";
  if (normals) head << "property " << type << " nx\nproperty " << type << " ny\nproperty " << type << " nz\n";
  if (scalar_field) head << "property " << type << " " << scalar_name << "\n";
  head << "end_header\n";

  auto out = open_out(path);
  out << head.str();
  std::vector<double> row;
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    row.assign(cloud.points[i].data(), cloud.points[i].data() + 3);
    if (normals) row.insert(row.end(), cloud.normals[i].data(), cloud.normals[i].data() + 3);
    if (scalar_field) row.push_back((*scalar_field)[i]);
    if (options.encoding == PlyEncoding::Ascii) {
      for (std::size_t k = 0; k < row.size(); ++k) {
        if (k) out << ' ';
        out << fmt_double(f64 ? row[k] : static_cast<double>(static_cast<float>(row[k])), f64 ? 17 : 9);
      }
      out << '\n';
    } else {
      for (double v : row) {
        if (f64) {
          out.write(reinterpret_cast<const char*>(&v), sizeof(v));
        } else {
          const float f = static_cast<float>(v);
          out.write(reinterpret_cast<const char*>(&f), sizeof(f));
        }
      }
    }
  }
  if (!out) throw Error(ErrorCode::IoError, "failed writing " + path.string());
}

// ---------------------------------------------------------------- OBJ

TriangleMesh read_obj(const fs::path& path) {
  const std::string data = slurp(path);
  TriangleMesh mesh;
  std::size_t pos = 0;
  std::size_t line_no = 0;
  while (pos < data.size()) {
    const std::size_t line_start = pos;
    std::size_t nl = data.find('\n', pos);
    if (nl == std::string::npos) nl = data.size();
    std::string line = data.substr(pos, nl - pos);
    pos = nl + 1;
    ++line_no;
    auto fail = [&](const std::string& msg) {
      throw Error(ErrorCode::ParseError, path.string() + ": " + msg + " on line " + std::to_string(line_no) +
                                             " at byte " + std::to_string(line_start));
    };
    std::istringstream ls(line);
    std::string key;
    ls >> key;
    if (key == "v") {
      Vec3 v;
      if (!(ls >> v.x() >> v.y() >> v.z())) fail("malformed vertex");
      mesh.vertices.push_back(v);
    } else if (key == "f") {
      std::vector<std::uint32_t> idx;
      std::string tok;
      while (ls >> tok) {
        long long i = 0;
        const auto slash = tok.find('/');
        const std::string head = tok.substr(0, slash);
        const auto res = std::from_chars(head.data(), head.data() + head.size(), i);
        if (res.ec != std::errc() || i == 0) fail("malformed face index '" + tok + "'");
        if (i < 0) i += static_cast<long long>(mesh.vertices.size()) + 1;
        if (i < 1 || i > static_cast<long long>(mesh.vertices.size())) fail("face index out of range");
        idx.push_back(static_cast<std::uint32_t>(i - 1));
      }
      if (idx.size() < 3) fail("face with fewer than 3 vertices");
      for (std::size_t k = 1; k + 1 < idx.size(); ++k) mesh.triangles.push_back({idx[0], idx[k], idx[k + 1]});
    }
  }
  return mesh;
}

void write_obj(const fs::path& path, const TriangleMesh& mesh) {
  auto out = open_out(path);
  for (const auto& v : mesh.vertices)
    out << "v " << fmt_double(v.x(), 17) << ' ' << fmt_double(v.y(), 17) << ' ' << fmt_double(v.z(), 17) << '\n';
  for (const auto& t : mesh.triangles) out << "f " << t[0] + 1 << ' ' << t[1] + 1 << ' ' << t[2] + 1 << '\n';
  if (!out) throw Error(ErrorCode::IoError, "failed writing " + path.string());
}

// ---------------------------------------------------------------- STL

TriangleMesh read_stl(const fs::path& path) {
  const std::string data = slurp(path);
  if (data.size() < 84)
    throw Error(ErrorCode::ParseError, path.string() + ": truncated STL header at byte " + std::to_string(data.size()));
  std::uint32_t count = 0;
  std::memcpy(&count, data.data() + 80, 4);
  const std::size_t expected = 84 + 50 * static_cast<std::size_t>(count);
  if (data.size() < expected)
    throw Error(ErrorCode::ParseError, path.string() + ": STL facet data ends early at byte " +
                                           std::to_string(data.size()) + " (expected " + std::to_string(expected) + ")");
  TriangleMesh mesh;
  std::map<std::array<float, 3>, std::uint32_t> weld;
  for (std::uint32_t f = 0; f < count; ++f) {
    const char* rec = data.data() + 84 + 50 * static_cast<std::size_t>(f);
    Triangle tri{};
    for (int k = 0; k < 3; ++k) {
      std::array<float, 3> v{};
      std::memcpy(v.data(), rec + 12 + 12 * k, 12);
      auto [it, inserted] = weld.try_emplace(v, static_cast<std::uint32_t>(mesh.vertices.size()));
      if (inserted) mesh.vertices.emplace_back(v[0], v[1], v[2]);
      tri[k] = it->second;
    }
    mesh.triangles.push_back(tri);
  }
  return mesh;
}

void write_stl(const fs::path& path, const TriangleMesh& mesh) {
  auto out = open_out(path);
  char header[80] = {};
  std::snprintf(header, sizeof(header), "mvfuse binary STL");
  out.write(header, 80);
  const auto count = static_cast<std::uint32_t>(mesh.triangles.size());
  out.write(reinterpret_cast<const char*>(&count), 4);
  for (std::size_t t = 0; t < mesh.triangles.size(); ++t) {
    float rec[12];
    const Vec3 n = mesh.face_normal(t);
    for (int k = 0; k < 3; ++k) rec[k] = static_cast<float>(n[k]);
    for (int c = 0; c < 3; ++c)
      for (int k = 0; k < 3; ++k) rec[3 + 3 * c + k] = static_cast<float>(mesh.corner(t, c)[k]);
    out.write(reinterpret_cast<const char*>(rec), sizeof(rec));
    const std::uint16_t attr = 0;
    out.write(reinterpret_cast<const char*>(&attr), 2);
  }
  if (!out) throw Error(ErrorCode::IoError, "failed writing " + path.string());
}

namespace {
std::string lower_ext(const fs::path& path) {
  std::string ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext;
}
}  // namespace

TriangleMesh read_mesh(const fs::path& path) {
  const std::string ext = lower_ext(path);
  if (ext == ".obj") return read_obj(path);
  if (ext == ".stl") return read_stl(path);
  throw Error(ErrorCode::IoError, "unrecognized mesh extension: " + path.string());
}

void write_mesh(const fs::path& path, const TriangleMesh& mesh) {
  const std::string ext = lower_ext(path);
  if (ext == ".obj") return write_obj(path, mesh);
  if (ext == ".stl") return write_stl(path, mesh);
  throw Error(ErrorCode::IoError, "unrecognized mesh extension: " + path.string());
}

// ---------------------------------------------------------------- JSON

nlohmann::json poses_to_json(const std::vector<RigidTransform>& poses) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& pose : poses) {
    const Eigen::Matrix4d m = pose.matrix();
    nlohmann::json row = nlohmann::json::array();
    for (int r = 0; r < 4; ++r)
      for (int c = 0; c < 4; ++c) row.push_back(m(r, c));
    arr.push_back(std::move(row));
  }
  return nlohmann::json{{"poses", std::move(arr)}};
}

std::vector<RigidTransform> poses_from_json(const nlohmann::json& doc) {
  if (!doc.is_object() || !doc.contains("poses") || !doc["poses"].is_array())
    throw Error(ErrorCode::ParseError, "pose document needs a 'poses' array");
  std::vector<RigidTransform> poses;
  for (const auto& row : doc["poses"]) {
    if (!row.is_array() || row.size() != 16)
      throw Error(ErrorCode::ParseError, "each pose must be 16 row-major numbers");
    Eigen::Matrix4d m;
    for (int i = 0; i < 16; ++i) {
      if (!row[i].is_number()) throw Error(ErrorCode::ParseError, "pose entry is not a number");
      m(i / 4, i % 4) = row[i].get<double>();
    }
    poses.push_back(RigidTransform::from_matrix(m, 1e-6));
  }
  return poses;
}

nlohmann::json read_json(const fs::path& path) {
  const std::string data = slurp(path);
  try {
    return nlohmann::json::parse(data);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorCode::ParseError, path.string() + ": " + e.what() + " at byte " + std::to_string(e.byte));
  }
}

void write_json(const fs::path& path, const nlohmann::json& doc) {
  auto out = open_out(path);
  out << doc.dump(2) << '\n';
  if (!out) throw Error(ErrorCode::IoError, "failed writing " + path.string());
}

std::vector<RigidTransform> read_poses(const fs::path& path) { return poses_from_json(read_json(path)); }

void write_poses(const fs::path& path, const std::vector<RigidTransform>& poses, const nlohmann::json& metadata) {
  nlohmann::json doc = poses_to_json(poses);
  if (!metadata.empty()) doc["metadata"] = metadata;
  write_json(path, doc);
}

void scale_in_place(PointCloud& cloud, double factor) {
  for (auto& p : cloud.points) p *= factor;
  for (auto& c : cloud.covariances) c *= factor * factor;
}

void scale_in_place(TriangleMesh& mesh, double factor) {
  for (auto& v : mesh.vertices) v *= factor;
}

}  // namespace mvfuse::io
