#include "dfusion/io.hpp"

#include <png.h>

#include <array>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <map>
#include <memory>
#include <sstream>
#include <stdexcept>
#include <vector>

namespace dfusion {
namespace {

static_assert(std::endian::native == std::endian::little, "PLY writer assumes a little-endian host");

std::runtime_error io_error(const std::string& what, const std::filesystem::path& path) {
  return std::runtime_error(what + ": " + path.string());
}

template <typename T>
void put(std::ostream& out, T value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T get(std::istream& in) {
  T value{};
  in.read(reinterpret_cast<char*>(&value), sizeof(T));
  return value;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) {
    return {};
  }
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

// --- PNG -----------------------------------------------------------------

struct PngWriter {
  png_structp png = nullptr;
  png_infop info = nullptr;
  ~PngWriter() { png_destroy_write_struct(&png, &info); }
};

struct PngReader {
  png_structp png = nullptr;
  png_infop info = nullptr;
  ~PngReader() { png_destroy_read_struct(&png, &info, nullptr); }
};

struct FileCloser {
  void operator()(std::FILE* f) const { std::fclose(f); }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

void write_png(const std::filesystem::path& path, int width, int height, int bit_depth,
               int color_type, const std::vector<png_bytep>& rows) {
  FilePtr file(std::fopen(path.c_str(), "wb"));
  if (!file) {
    throw io_error("cannot open for writing", path);
  }
  PngWriter w;
  w.png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (w.png == nullptr) {
    throw io_error("png_create_write_struct failed", path);
  }
  w.info = png_create_info_struct(w.png);
  if (w.info == nullptr) {
    throw io_error("png_create_info_struct failed", path);
  }
  if (setjmp(png_jmpbuf(w.png))) {
    throw io_error("libpng write error", path);
  }
  png_init_io(w.png, file.get());
  png_set_IHDR(w.png, w.info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height),
               bit_depth, color_type, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(w.png, w.info);
  if (bit_depth == 16) {
    png_set_swap(w.png);  // rows hold host-order (little-endian) samples
  }
  png_write_image(w.png, const_cast<png_bytepp>(rows.data()));
  png_write_end(w.png, nullptr);
}

struct PngImage {
  int width = 0;
  int height = 0;
  int bit_depth = 0;
  int color_type = 0;
  std::vector<unsigned char> data;
  std::size_t row_bytes = 0;
};

PngImage read_png(const std::filesystem::path& path) {
  FilePtr file(std::fopen(path.c_str(), "rb"));
  if (!file) {
    throw io_error("cannot open for reading", path);
  }
  std::array<unsigned char, 8> sig{};
  if (std::fread(sig.data(), 1, sig.size(), file.get()) != sig.size() ||
      png_sig_cmp(sig.data(), 0, sig.size()) != 0) {
    throw io_error("not a PNG file", path);
  }
  PngReader r;
  r.png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (r.png == nullptr) {
    throw io_error("png_create_read_struct failed", path);
  }
  r.info = png_create_info_struct(r.png);
  if (r.info == nullptr) {
    throw io_error("png_create_info_struct failed", path);
  }
  // Declared before setjmp so a libpng error never skips their destructors.
  PngImage img;
  std::vector<png_bytep> rows;
  if (setjmp(png_jmpbuf(r.png))) {
    throw io_error("libpng read error", path);
  }
  png_init_io(r.png, file.get());
  png_set_sig_bytes(r.png, static_cast<int>(sig.size()));
  png_read_info(r.png, r.info);
  img.width = static_cast<int>(png_get_image_width(r.png, r.info));
  img.height = static_cast<int>(png_get_image_height(r.png, r.info));
  img.bit_depth = png_get_bit_depth(r.png, r.info);
  img.color_type = png_get_color_type(r.png, r.info);
  if (img.bit_depth == 16) {
    png_set_swap(r.png);
  }
  if (img.color_type == PNG_COLOR_TYPE_PALETTE) {
    png_set_palette_to_rgb(r.png);
  }
  png_read_update_info(r.png, r.info);
  img.color_type = png_get_color_type(r.png, r.info);
  img.bit_depth = png_get_bit_depth(r.png, r.info);
  img.row_bytes = png_get_rowbytes(r.png, r.info);
  img.data.resize(img.row_bytes * static_cast<std::size_t>(img.height));
  rows.resize(static_cast<std::size_t>(img.height));
  for (int v = 0; v < img.height; ++v) {
    rows[v] = img.data.data() + img.row_bytes * static_cast<std::size_t>(v);
  }
  png_read_image(r.png, rows.data());
  png_read_end(r.png, nullptr);
  return img;
}

// --- PLY -----------------------------------------------------------------

struct PlyProperty {
  std::string type;
  std::string name;
  bool is_list = false;
  std::string count_type;
};

struct PlyElement {
  std::string name;
  std::size_t count = 0;
  std::vector<PlyProperty> properties;
};

double read_scalar(std::istream& in, const std::string& type, bool ascii) {
  if (ascii) {
    double v = 0.0;
    in >> v;
    return v;
  }
  if (type == "float" || type == "float32") return get<float>(in);
  if (type == "double" || type == "float64") return get<double>(in);
  if (type == "uchar" || type == "uint8") return get<std::uint8_t>(in);
  if (type == "char" || type == "int8") return get<std::int8_t>(in);
  if (type == "ushort" || type == "uint16") return get<std::uint16_t>(in);
  if (type == "short" || type == "int16") return get<std::int16_t>(in);
  if (type == "uint" || type == "uint32") return get<std::uint32_t>(in);
  if (type == "int" || type == "int32") return get<std::int32_t>(in);
  throw std::runtime_error("PLY: unsupported property type " + type);
}

}  // namespace

void write_ply(const TriangleMesh& mesh, const std::filesystem::path& path) {
  // Normals and colors are optional; present ones must match the vertices.
  if ((!mesh.normals.empty() && mesh.normals.size() != mesh.vertices.size()) ||
      (!mesh.colors.empty() && mesh.colors.size() != mesh.vertices.size())) {
    throw std::invalid_argument("write_ply: attribute arrays differ in length from vertices");
  }
  const auto n = static_cast<std::int64_t>(mesh.vertices.size());
  for (const auto& tri : mesh.triangles) {
    for (const auto idx : tri) {
      if (idx < 0 || idx >= n) {
        throw std::invalid_argument("write_ply: triangle index out of range");
      }
    }
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw io_error("cannot open for writing", path);
  }
  const bool has_normals = mesh.normals.size() == mesh.vertices.size();
  const bool has_colors = mesh.colors.size() == mesh.vertices.size();
  out << "ply\nformat binary_little_endian 1.0\n";
  out << "element vertex " << mesh.vertices.size() << "\n";
  out << "property float x\nproperty float y\nproperty float z\n";
  if (has_normals) {
    out << "property float nx\nproperty float ny\nproperty float nz\n";
  }
  if (has_colors) {
    out << "property uchar red\nproperty uchar green\nproperty uchar blue\n";
  }
  out << "element face " << mesh.triangles.size() << "\n";
  out << "property list uchar int vertex_indices\nend_header\n";
  for (std::size_t i = 0; i < mesh.vertices.size(); ++i) {
    for (int a = 0; a < 3; ++a) {
      put(out, static_cast<float>(mesh.vertices[i][a]));
    }
    if (has_normals) {
      for (int a = 0; a < 3; ++a) {
        put(out, static_cast<float>(mesh.normals[i][a]));
      }
    }
    if (has_colors) {
      put(out, mesh.colors[i].r);
      put(out, mesh.colors[i].g);
      put(out, mesh.colors[i].b);
    }
  }
  for (const auto& t : mesh.triangles) {
    put(out, std::uint8_t{3});
    for (const auto idx : t) {
      put(out, idx);
    }
  }
  if (!out) {
    throw io_error("write failed", path);
  }
}

TriangleMesh read_ply(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw io_error("cannot open for reading", path);
  }
  std::string line;
  std::getline(in, line);
  if (trim(line) != "ply") {
    throw io_error("not a PLY file", path);
  }
  bool ascii = false;
  std::vector<PlyElement> elements;
  while (std::getline(in, line)) {
    std::istringstream ls(trim(line));
    std::string word;
    ls >> word;
    if (word == "format") {
      std::string fmt;
      ls >> fmt;
      if (fmt == "ascii") {
        ascii = true;
      } else if (fmt != "binary_little_endian") {
        throw io_error("unsupported PLY format " + fmt, path);
      }
    } else if (word == "element") {
      PlyElement e;
      ls >> e.name >> e.count;
      elements.push_back(e);
    } else if (word == "property") {
      if (elements.empty()) {
        throw io_error("PLY property before element", path);
      }
      PlyProperty p;
      ls >> p.type;
      if (p.type == "list") {
        p.is_list = true;
        ls >> p.count_type >> p.type;
      }
      ls >> p.name;
      elements.back().properties.push_back(p);
    } else if (word == "end_header") {
      break;
    }
  }

  TriangleMesh mesh;
  for (const auto& e : elements) {
    for (std::size_t i = 0; i < e.count; ++i) {
      Vec3 p = Vec3::Zero();
      Vec3 n = Vec3::Zero();
      Rgb c{};
      bool has_n = false;
      bool has_c = false;
      for (const auto& prop : e.properties) {
        if (prop.is_list) {
          const auto count = static_cast<std::size_t>(read_scalar(in, prop.count_type, ascii));
          std::vector<std::int32_t> idx(count);
          for (auto& x : idx) {
            x = static_cast<std::int32_t>(read_scalar(in, prop.type, ascii));
          }
          if (e.name == "face") {
            for (std::size_t k = 1; k + 1 < count; ++k) {
              mesh.triangles.push_back({idx[0], idx[k], idx[k + 1]});
            }
          }
          continue;
        }
        const double v = read_scalar(in, prop.type, ascii);
        if (e.name != "vertex") {
          continue;
        }
        if (prop.name == "x") p.x() = v;
        else if (prop.name == "y") p.y() = v;
        else if (prop.name == "z") p.z() = v;
        else if (prop.name == "nx") { n.x() = v; has_n = true; }
        else if (prop.name == "ny") { n.y() = v; has_n = true; }
        else if (prop.name == "nz") { n.z() = v; has_n = true; }
        else if (prop.name == "red") { c.r = static_cast<std::uint8_t>(v); has_c = true; }
        else if (prop.name == "green") { c.g = static_cast<std::uint8_t>(v); has_c = true; }
        else if (prop.name == "blue") { c.b = static_cast<std::uint8_t>(v); has_c = true; }
      }
      if (e.name == "vertex") {
        mesh.vertices.push_back(p);
        if (has_n) {
          // Stored as float; renormalize so validation holds.
          mesh.normals.push_back(n.norm() > 0.0 ? Vec3(n.normalized()) : n);
        }
        if (has_c) {
          mesh.colors.push_back(c);
        }
      }
    }
  }
  if (!in) {
    throw io_error("truncated PLY file", path);
  }
  return mesh;
}

void write_depth_png(const DepthMap& depth, const std::filesystem::path& path) {
  const auto w = static_cast<std::size_t>(depth.width());
  std::vector<std::uint16_t> buf(depth.size());
  for (std::size_t i = 0; i < buf.size(); ++i) {
    const double d = depth.pixels()[i];
    const double mm = std::round(d * 1000.0);
    buf[i] = is_valid_depth(d) && mm <= 65535.0 ? static_cast<std::uint16_t>(mm) : 0;
  }
  std::vector<png_bytep> rows(static_cast<std::size_t>(depth.height()));
  for (std::size_t v = 0; v < rows.size(); ++v) {
    rows[v] = reinterpret_cast<png_bytep>(buf.data() + v * w);
  }
  write_png(path, depth.width(), depth.height(), 16, PNG_COLOR_TYPE_GRAY, rows);
}

DepthMap read_depth_png(const std::filesystem::path& path) {
  const PngImage img = read_png(path);
  if (img.color_type != PNG_COLOR_TYPE_GRAY || img.bit_depth != 16) {
    throw io_error("depth PNG must be 16-bit grayscale", path);
  }
  DepthMap depth(img.width, img.height, kInvalidDepth);
  for (int v = 0; v < img.height; ++v) {
    const unsigned char* row = img.data.data() + img.row_bytes * static_cast<std::size_t>(v);
    for (int u = 0; u < img.width; ++u) {
      std::uint16_t mm = 0;
      std::memcpy(&mm, row + 2 * u, 2);
      depth.at(u, v) = mm == 0 ? kInvalidDepth : mm / 1000.0;
    }
  }
  return depth;
}

void write_color_png(const ColorMap& color, const std::filesystem::path& path) {
  const auto w = static_cast<std::size_t>(color.width());
  std::vector<unsigned char> buf(color.size() * 3);
  for (std::size_t i = 0; i < color.size(); ++i) {
    buf[3 * i] = color.pixels()[i].r;
    buf[3 * i + 1] = color.pixels()[i].g;
    buf[3 * i + 2] = color.pixels()[i].b;
  }
  std::vector<png_bytep> rows(static_cast<std::size_t>(color.height()));
  for (std::size_t v = 0; v < rows.size(); ++v) {
    rows[v] = buf.data() + v * w * 3;
  }
  write_png(path, color.width(), color.height(), 8, PNG_COLOR_TYPE_RGB, rows);
}

ColorMap read_color_png(const std::filesystem::path& path) {
  const PngImage img = read_png(path);
  if (img.bit_depth != 8 ||
      (img.color_type != PNG_COLOR_TYPE_RGB && img.color_type != PNG_COLOR_TYPE_RGB_ALPHA)) {
    throw io_error("color PNG must be 8-bit RGB", path);
  }
  const int channels = img.color_type == PNG_COLOR_TYPE_RGB ? 3 : 4;
  ColorMap color(img.width, img.height);
  for (int v = 0; v < img.height; ++v) {
    const unsigned char* row = img.data.data() + img.row_bytes * static_cast<std::size_t>(v);
    for (int u = 0; u < img.width; ++u) {
      const unsigned char* px = row + channels * u;
      color.at(u, v) = Rgb{px[0], px[1], px[2]};
    }
  }
  return color;
}

void write_intrinsics(const CameraIntrinsics& k, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) {
    throw io_error("cannot open for writing", path);
  }
  out << "fx = " << format_number(k.fx) << "\n"
      << "fy = " << format_number(k.fy) << "\n"
      << "cx = " << format_number(k.cx) << "\n"
      << "cy = " << format_number(k.cy) << "\n"
      << "width = " << k.width << "\n"
      << "height = " << k.height << "\n";
}

CameraIntrinsics read_intrinsics(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw io_error("cannot open for reading", path);
  }
  std::map<std::string, std::string> values;
  std::string line;
  while (std::getline(in, line)) {
    if (const auto hash = line.find('#'); hash != std::string::npos) {
      line.erase(hash);
    }
    for (char& ch : line) {
      if (ch == '=' || ch == ':') {
        ch = ' ';
      }
    }
    std::istringstream ls(line);
    std::string key;
    std::string value;
    if (ls >> key >> value) {
      values[key] = value;
    }
  }
  auto number = [&](const char* key) {
    const auto it = values.find(key);
    if (it == values.end()) {
      throw io_error(std::string("intrinsics missing ") + key, path);
    }
    try {
      return std::stod(it->second);
    } catch (const std::exception&) {
      throw io_error(std::string("intrinsics value not a number for ") + key, path);
    }
  };
  CameraIntrinsics k;
  k.fx = number("fx");
  k.fy = number("fy");
  k.cx = number("cx");
  k.cy = number("cy");
  k.width = static_cast<int>(number("width"));
  k.height = static_cast<int>(number("height"));
  k.validate();
  return k;
}

std::string frame_file_name(std::string_view prefix, int t, std::string_view extension) {
  char digits[16];
  std::snprintf(digits, sizeof(digits), "%05d", t);
  return std::string(prefix) + "_" + digits + "." + std::string(extension);
}

void write_sequence_frame(const RenderedFrame& frame, const std::filesystem::path& dir, int t) {
  write_depth_png(frame.depth, dir / frame_file_name("depth", t, "png"));
  write_color_png(frame.color, dir / frame_file_name("color", t, "png"));
}

RenderedFrame read_sequence_frame(const std::filesystem::path& dir, int t) {
  RenderedFrame out;
  out.depth = read_depth_png(dir / frame_file_name("depth", t, "png"));
  const auto color_path = dir / frame_file_name("color", t, "png");
  if (std::filesystem::exists(color_path)) {
    out.color = read_color_png(color_path);
  } else {
    out.color = ColorMap(out.depth.width(), out.depth.height(), Rgb{128, 128, 128});
  }
  return out;
}

int count_sequence_frames(const std::filesystem::path& dir) {
  int n = 0;
  while (std::filesystem::exists(dir / frame_file_name("depth", n, "png"))) {
    ++n;
  }
  return n;
}

std::string format_number(double value) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.9g", value);
  return buf;
}

void write_report(const RunReport& report, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) {
    throw io_error("cannot open for writing", path);
  }
  auto opt = [](const std::optional<double>& v) { return v ? format_number(*v) : std::string(); };
  out << kReportHeader << "\n";
  for (const auto& r : report.frames) {
    out << r.frame << ',' << opt(r.alignment_error) << ',' << opt(r.alignment_rms) << ','
        << opt(r.surface_rms) << ',' << opt(r.surface_max) << ',' << r.correspondences << ','
        << format_number(r.track_seconds) << ',' << format_number(r.fuse_seconds) << ','
        << format_number(r.extract_seconds) << "\n";
  }
  out.flush();
  if (!out) {
    throw io_error("write failed", path);
  }
}

RunReport read_report(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw io_error("cannot open for reading", path);
  }
  std::string line;
  if (!std::getline(in, line) || trim(line) != kReportHeader) {
    throw io_error("unexpected report header", path);
  }
  RunReport report;
  while (std::getline(in, line)) {
    if (trim(line).empty()) {
      continue;
    }
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream ls(line);
    while (std::getline(ls, cell, ',')) {
      cells.push_back(trim(cell));
    }
    while (cells.size() < 9) {
      cells.emplace_back();
    }
    if (cells.size() != 9) {
      throw io_error("report row has the wrong number of columns", path);
    }
    auto opt = [](const std::string& s) -> std::optional<double> {
      if (s.empty()) {
        return std::nullopt;
      }
      return std::stod(s);
    };
    FrameRecord r;
    try {
      r.frame = std::stoi(cells[0]);
      r.alignment_error = opt(cells[1]);
      r.alignment_rms = opt(cells[2]);
      r.surface_rms = opt(cells[3]);
      r.surface_max = opt(cells[4]);
      r.correspondences = std::stoi(cells[5]);
      r.track_seconds = std::stod(cells[6]);
      r.fuse_seconds = std::stod(cells[7]);
      r.extract_seconds = std::stod(cells[8]);
    } catch (const std::logic_error&) {
      throw io_error("malformed report row", path);
    }
    report.frames.push_back(std::move(r));
  }
  return report;
}

}  // namespace dfusion
