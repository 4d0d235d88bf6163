#include "worldscaffold/io.hpp"

#include <png.h>

#include <atomic>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>
#include <unistd.h>

#include "worldscaffold/error.hpp"

namespace worldscaffold::io {

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingDependency(path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file_atomic(const fs::path& path, const std::string& bytes) {
  static std::atomic<unsigned> counter{0};
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  const fs::path tmp = path.string() + ".tmp." + std::to_string(::getpid()) + "." + std::to_string(counter++);
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorKind::InvalidInput, "cannot write " + tmp.string());
    out.write(bytes.data(), std::streamsize(bytes.size()));
    out.flush();
    if (!out) {
      std::error_code ec;
      fs::remove(tmp, ec);
      throw Error(ErrorKind::InvalidInput, "short write to " + tmp.string());
    }
  }
  fs::rename(tmp, path);
}

void require_file(const fs::path& path) {
  if (!fs::exists(path)) throw MissingDependency(path.string());
}

Json read_json(const fs::path& path) {
  const std::string text = read_file(path);
  try {
    return Json::parse(text);
  } catch (const Json::parse_error& e) {
    throw ParseError(path.string(), e.byte, e.what());
  }
}

void write_json(const fs::path& path, const Json& doc) { write_file_atomic(path, doc.dump(2) + "\n"); }

// ---------------------------------------------------------------------------
// PLY

namespace {

enum class Scalar { I8, U8, I16, U16, I32, U32, F32, F64 };

std::optional<Scalar> parse_scalar(const std::string& t) {
  if (t == "char" || t == "int8") return Scalar::I8;
  if (t == "uchar" || t == "uint8") return Scalar::U8;
  if (t == "short" || t == "int16") return Scalar::I16;
  if (t == "ushort" || t == "uint16") return Scalar::U16;
  if (t == "int" || t == "int32") return Scalar::I32;
  if (t == "uint" || t == "uint32") return Scalar::U32;
  if (t == "float" || t == "float32") return Scalar::F32;
  if (t == "double" || t == "float64") return Scalar::F64;
  return std::nullopt;
}

std::size_t scalar_size(Scalar s) {
  switch (s) {
    case Scalar::I8:
    case Scalar::U8: return 1;
    case Scalar::I16:
    case Scalar::U16: return 2;
    case Scalar::I32:
    case Scalar::U32:
    case Scalar::F32: return 4;
    case Scalar::F64: return 8;
  }
  return 0;
}

struct Property {
  std::string name;
  Scalar type = Scalar::F32;
  bool is_list = false;
  Scalar count_type = Scalar::U8;
};

struct Element {
  std::string name;
  std::size_t count = 0;
  std::vector<Property> props;
};

class Reader {
 public:
  Reader(const std::string& path, const std::string& data, std::size_t pos) : path_(path), data_(data), pos_(pos) {}

  double read(Scalar s) {
    const std::size_t n = scalar_size(s);
    if (pos_ + n > data_.size()) throw ParseError(path_, pos_, "unexpected end of file in binary body");
    const char* p = data_.data() + pos_;
    pos_ += n;
    switch (s) {
      case Scalar::I8: return double(*reinterpret_cast<const std::int8_t*>(p));
      case Scalar::U8: return double(*reinterpret_cast<const std::uint8_t*>(p));
      case Scalar::I16: return double(load<std::int16_t>(p));
      case Scalar::U16: return double(load<std::uint16_t>(p));
      case Scalar::I32: return double(load<std::int32_t>(p));
      case Scalar::U32: return double(load<std::uint32_t>(p));
      case Scalar::F32: return double(load<float>(p));
      case Scalar::F64: return load<double>(p);
    }
    return 0.0;
  }
  std::size_t pos() const { return pos_; }

 private:
  template <typename T>
  static T load(const char* p) {
    T v;
    std::memcpy(&v, p, sizeof(T));
    return v;
  }
  const std::string& path_;
  const std::string& data_;
  std::size_t pos_;
};

}  // namespace

PlyData read_ply(const fs::path& fpath) {
  const std::string path = fpath.string();
  const std::string data = read_file(fpath);
  std::size_t pos = 0;
  auto next_line = [&]() -> std::string {
    const std::size_t end = data.find('\n', pos);
    if (end == std::string::npos) throw ParseError(path, pos, "header is not terminated by end_header");
    std::string line = data.substr(pos, end - pos);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    pos = end + 1;
    return line;
  };

  if (next_line() != "ply") throw ParseError(path, 0, "missing 'ply' magic");
  std::vector<Element> elements;
  bool format_ok = false;
  while (true) {
    const std::size_t line_start = pos;
    const std::string line = next_line();
    std::istringstream ls(line);
    std::string tok;
    ls >> tok;
    if (tok == "end_header") break;
    if (tok == "comment" || tok == "obj_info" || tok.empty()) continue;
    if (tok == "format") {
      std::string fmt;
      ls >> fmt;
      if (fmt != "binary_little_endian") throw ParseError(path, line_start, "unsupported PLY format '" + fmt + "'");
      format_ok = true;
    } else if (tok == "element") {
      Element e;
      long long count = -1;
      ls >> e.name >> count;
      if (!ls || count < 0) throw ParseError(path, line_start, "malformed element line");
      e.count = std::size_t(count);
      elements.push_back(e);
    } else if (tok == "property") {
      if (elements.empty()) throw ParseError(path, line_start, "property before any element");
      Property p;
      std::string t;
      ls >> t;
      if (t == "list") {
        std::string ct, vt;
        ls >> ct >> vt >> p.name;
        const auto c = parse_scalar(ct), v = parse_scalar(vt);
        if (!c || !v || !ls) throw ParseError(path, line_start, "malformed list property");
        p.is_list = true;
        p.count_type = *c;
        p.type = *v;
      } else {
        const auto s = parse_scalar(t);
        ls >> p.name;
        if (!s || !ls) throw ParseError(path, line_start, "unknown property type '" + t + "'");
        p.type = *s;
      }
      elements.back().props.push_back(p);
    } else {
      throw ParseError(path, line_start, "unexpected header keyword '" + tok + "'");
    }
  }
  if (!format_ok) throw ParseError(path, 0, "missing format line");

  PlyData out;
  Reader rd(path, data, pos);
  for (const Element& e : elements) {
    if (e.name == "vertex") {
      int ix = -1, iy = -1, iz = -1, ir = -1, ig = -1, ib = -1, ic = -1;
      for (int k = 0; k < int(e.props.size()); ++k) {
        const std::string& n = e.props[k].name;
        if (n == "x") ix = k;
        else if (n == "y") iy = k;
        else if (n == "z") iz = k;
        else if (n == "red") ir = k;
        else if (n == "green") ig = k;
        else if (n == "blue") ib = k;
        else if (n == "confidence") ic = k;
      }
      if (ix < 0 || iy < 0 || iz < 0) throw ParseError(path, pos, "vertex element lacks x/y/z");
      const bool colors = ir >= 0 && ig >= 0 && ib >= 0;
      out.cloud.points.reserve(e.count);
      std::vector<double> vals(e.props.size());
      for (std::size_t i = 0; i < e.count; ++i) {
        for (std::size_t k = 0; k < e.props.size(); ++k) {
          const Property& p = e.props[k];
          if (p.is_list) {
            const long long n = (long long)rd.read(p.count_type);
            for (long long j = 0; j < n; ++j) rd.read(p.type);
            vals[k] = 0;
          } else {
            vals[k] = rd.read(p.type);
          }
        }
        out.cloud.points.emplace_back(vals[ix], vals[iy], vals[iz]);
        if (colors) {
          out.cloud.colors.push_back({std::uint8_t(std::clamp(vals[ir], 0.0, 255.0)),
                                      std::uint8_t(std::clamp(vals[ig], 0.0, 255.0)),
                                      std::uint8_t(std::clamp(vals[ib], 0.0, 255.0))});
        }
        if (ic >= 0) out.cloud.confidence.push_back(vals[ic]);
      }
    } else if (e.name == "face") {
      for (std::size_t i = 0; i < e.count; ++i) {
        for (const Property& p : e.props) {
          if (!p.is_list) {
            rd.read(p.type);
            continue;
          }
          const std::size_t at = rd.pos();
          const long long n = (long long)rd.read(p.count_type);
          std::vector<std::int32_t> idx;
          for (long long j = 0; j < n; ++j) idx.push_back(std::int32_t(rd.read(p.type)));
          if (p.name != "vertex_indices" && p.name != "vertex_index") continue;
          if (n < 3) throw ParseError(path, at, "face with fewer than 3 vertices");
          for (long long j = 1; j + 1 < n; ++j) out.faces.push_back({idx[0], idx[j], idx[j + 1]});  // fan
        }
      }
    } else {
      for (std::size_t i = 0; i < e.count; ++i) {
        for (const Property& p : e.props) {
          if (p.is_list) {
            const long long n = (long long)rd.read(p.count_type);
            for (long long j = 0; j < n; ++j) rd.read(p.type);
          } else {
            rd.read(p.type);
          }
        }
      }
    }
  }
  for (const Face& f : out.faces) {
    for (std::int32_t v : f) {
      if (v < 0 || std::size_t(v) >= out.cloud.size()) {
        throw ParseError(path, rd.pos(), "face index " + std::to_string(v) + " out of range");
      }
    }
  }
  return out;
}

void write_ply(const fs::path& path, const cloud::PointCloud& c, const std::vector<Face>& faces) {
  c.validate();
  std::ostringstream h;
  h << "ply\nformat binary_little_endian 1.0\n";
  h << "element vertex " << c.size() << "\n";
  h << "property float x\nproperty float y\nproperty float z\n";
  if (c.has_colors()) h << "property uchar red\nproperty uchar green\nproperty uchar blue\n";
  if (c.has_confidence()) h << "property float confidence\n";
  if (!faces.empty()) h << "element face " << faces.size() << "\nproperty list uchar int vertex_indices\n";
  h << "end_header\n";
  std::string bytes = h.str();
  auto put = [&](const auto& v) {
    const char* p = reinterpret_cast<const char*>(&v);
    bytes.append(p, sizeof(v));
  };
  for (std::size_t i = 0; i < c.size(); ++i) {
    for (int k = 0; k < 3; ++k) put(float(c.points[i][k]));
    if (c.has_colors()) {
      for (int k = 0; k < 3; ++k) put(c.colors[i][k]);
    }
    if (c.has_confidence()) put(float(c.confidence[i]));
  }
  for (const Face& f : faces) {
    put(std::uint8_t(3));
    for (std::int32_t v : f) put(v);
  }
  write_file_atomic(path, bytes);
}

// ---------------------------------------------------------------------------
// PNG

cloud::BinaryMask read_mask_png(const fs::path& path) {
  const std::string data = read_file(path);
  png_image image;
  std::memset(&image, 0, sizeof(image));
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&image, data.data(), data.size())) {
    throw ParseError(path.string(), 0, std::string("PNG header: ") + image.message);
  }
  image.format = PNG_FORMAT_GRAY;
  std::vector<std::uint8_t> buf(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, buf.data(), 0, nullptr)) {
    const std::string msg = image.message;
    png_image_free(&image);
    throw ParseError(path.string(), 0, "PNG body: " + msg);
  }
  cloud::BinaryMask m(int(image.width), int(image.height));
  for (std::size_t i = 0; i < buf.size(); ++i) m.bits[i] = buf[i] ? 1 : 0;
  return m;
}

void write_mask_png(const fs::path& path, const cloud::BinaryMask& m) {
  m.validate();
  std::vector<std::uint8_t> buf(m.bits.size());
  for (std::size_t i = 0; i < buf.size(); ++i) buf[i] = m.bits[i] ? 255 : 0;
  png_image image;
  std::memset(&image, 0, sizeof(image));
  image.version = PNG_IMAGE_VERSION;
  image.width = png_uint_32(m.width);
  image.height = png_uint_32(m.height);
  image.format = PNG_FORMAT_GRAY;
  png_alloc_size_t size = 0;
  if (!png_image_write_to_memory(&image, nullptr, &size, 0, buf.data(), 0, nullptr)) {
    throw Error(ErrorKind::InvalidInput, std::string("PNG encode: ") + image.message);
  }
  std::string bytes(size, '\0');
  if (!png_image_write_to_memory(&image, bytes.data(), &size, 0, buf.data(), 0, nullptr)) {
    throw Error(ErrorKind::InvalidInput, std::string("PNG encode: ") + image.message);
  }
  bytes.resize(size);
  write_file_atomic(path, bytes);
}

// ---------------------------------------------------------------------------
// Raw float32 maps

namespace {
fs::path sidecar_of(const fs::path& p) {
  fs::path s = p;
  s.replace_extension(".json");
  return s;
}
}  // namespace

RawImage read_raw_f32(const fs::path& path) {
  const fs::path side = sidecar_of(path);
  require_file(side);
  const Json meta = read_json(side);
  RawImage img;
  try {
    img.width = meta.at("width").get<int>();
    img.height = meta.at("height").get<int>();
  } catch (const Json::exception& e) {
    throw ParseError(side.string(), 0, std::string("sidecar: ") + e.what());
  }
  if (img.width < 0 || img.height < 0) throw ParseError(side.string(), 0, "negative dimensions");
  const std::string data = read_file(path);
  const std::size_t expect = std::size_t(img.width) * std::size_t(img.height) * sizeof(float);
  if (data.size() != expect) {
    throw ParseError(path.string(), std::min(data.size(), expect),
                     "expected " + std::to_string(expect) + " bytes for " + std::to_string(img.width) + "x" +
                         std::to_string(img.height) + " float32, found " + std::to_string(data.size()));
  }
  img.data.resize(std::size_t(img.width) * std::size_t(img.height));
  std::memcpy(img.data.data(), data.data(), expect);
  return img;
}

void write_raw_f32(const fs::path& path, const RawImage& img) {
  if (img.data.size() != std::size_t(img.width) * std::size_t(img.height)) {
    throw InvalidInput("write_raw_f32: buffer does not match dimensions");
  }
  write_file_atomic(path, std::string(reinterpret_cast<const char*>(img.data.data()), img.data.size() * sizeof(float)));
  write_json(sidecar_of(path), Json{{"width", img.width}, {"height", img.height}});
}

}  // namespace worldscaffold::io
