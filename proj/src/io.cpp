#include "dr/io.hpp"

#include <zlib.h>

#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

namespace dr {

// ---------------------------------------------------------------------------
// OBJ

ObjMesh load_obj(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  ObjMesh mesh;
  bool any_color = false;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    // strip comments
    size_t hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    std::istringstream ss(line);
    std::string tag;
    if (!(ss >> tag)) continue;
    if (tag == "v") {
      double x, y, z;
      if (!(ss >> x >> y >> z))
        throw ParseError(path + ":" + std::to_string(lineno) + ": malformed vertex");
      mesh.verts.push_back({x, y, z});
      double r, g, b;
      if (ss >> r >> g >> b) {
        if (!mesh.vertex_colors) mesh.vertex_colors.emplace(mesh.verts.size() - 1, Vec3{1, 1, 1});
        mesh.vertex_colors->push_back({r, g, b});
        any_color = true;
      } else if (mesh.vertex_colors) {
        mesh.vertex_colors->push_back({1, 1, 1});
      }
    } else if (tag == "f") {
      std::vector<int64_t> idx;
      std::string tok;
      while (ss >> tok) {
        // take the vertex index before any '/'
        size_t slash = tok.find('/');
        if (slash != std::string::npos) tok.resize(slash);
        int64_t i;
        try {
          i = std::stoll(tok);
        } catch (...) {
          throw ParseError(path + ":" + std::to_string(lineno) + ": bad face index '" + tok + "'");
        }
        if (i == 0) throw ParseError(path + ":" + std::to_string(lineno) + ": face index 0");
        if (i < 0) i = int64_t(mesh.verts.size()) + i;  // negative indices from the end
        else i -= 1;
        if (i < 0 || i >= int64_t(mesh.verts.size()))
          throw ParseError(path + ":" + std::to_string(lineno) + ": face index out of range");
        idx.push_back(i);
      }
      if (idx.size() < 3)
        throw ParseError(path + ":" + std::to_string(lineno) + ": face with fewer than 3 indices");
      for (size_t k = 1; k + 1 < idx.size(); ++k)  // fan triangulation
        mesh.faces.push_back({idx[0], idx[k], idx[k + 1]});
    }
    // vt / vn / everything else ignored
  }
  if (!any_color) mesh.vertex_colors.reset();
  return mesh;
}

void save_obj(const std::string& path, const std::vector<Vec3>& verts,
              const std::vector<Face>& faces, const std::optional<std::vector<Vec3>>& colors) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path + " for writing");
  char buf[256];
  for (size_t i = 0; i < verts.size(); ++i) {
    const Vec3& v = verts[i];
    if (colors) {
      const Vec3& c = (*colors)[i];
      std::snprintf(buf, sizeof buf, "v %.17g %.17g %.17g %.17g %.17g %.17g\n", v.x, v.y, v.z, c.x,
                    c.y, c.z);
    } else {
      std::snprintf(buf, sizeof buf, "v %.17g %.17g %.17g\n", v.x, v.y, v.z);
    }
    out << buf;
  }
  for (const Face& f : faces)
    out << "f " << f.a + 1 << ' ' << f.b + 1 << ' ' << f.c + 1 << '\n';
  if (!out) throw IoError("write failed for " + path);
}

MeshBatch obj_to_batch(const ObjMesh& mesh) {
  return MeshBatch({mesh.verts}, {mesh.faces});
}

// ---------------------------------------------------------------------------
// PNG (8-bit RGB/RGBA, zlib-compressed, no interlace)

namespace {

void put_u32(std::vector<unsigned char>& out, uint32_t v) {
  out.push_back((unsigned char)(v >> 24));
  out.push_back((unsigned char)(v >> 16));
  out.push_back((unsigned char)(v >> 8));
  out.push_back((unsigned char)v);
}

uint32_t read_u32(const unsigned char* p) {
  return (uint32_t(p[0]) << 24) | (uint32_t(p[1]) << 16) | (uint32_t(p[2]) << 8) | p[3];
}

void write_chunk(std::ofstream& out, const char type[4], const std::vector<unsigned char>& data) {
  std::vector<unsigned char> head;
  put_u32(head, uint32_t(data.size()));
  out.write(reinterpret_cast<const char*>(head.data()), 4);
  out.write(type, 4);
  if (!data.empty()) out.write(reinterpret_cast<const char*>(data.data()), std::streamsize(data.size()));
  uLong crc = crc32(0L, Z_NULL, 0);
  crc = crc32(crc, reinterpret_cast<const Bytef*>(type), 4);
  if (!data.empty()) crc = crc32(crc, data.data(), uInt(data.size()));
  std::vector<unsigned char> tail;
  put_u32(tail, uint32_t(crc));
  out.write(reinterpret_cast<const char*>(tail.data()), 4);
}

int paeth(int a, int b, int c) {
  int p = a + b - c;
  int pa = std::abs(p - a), pb = std::abs(p - b), pc = std::abs(p - c);
  if (pa <= pb && pa <= pc) return a;
  return pb <= pc ? b : c;
}

}  // namespace

void save_png(const Image& img, const std::string& path) {
  if (img.c != 1 && img.c != 3 && img.c != 4) throw IoError("save_png: channels must be 1, 3 or 4");
  int out_c = img.c == 1 ? 3 : img.c;
  // raw scanlines, filter byte 0 per row
  std::vector<unsigned char> raw;
  raw.reserve(size_t(img.h) * (size_t(img.w) * out_c + 1));
  for (int i = 0; i < img.h; ++i) {
    raw.push_back(0);
    for (int j = 0; j < img.w; ++j) {
      for (int ch = 0; ch < out_c; ++ch) {
        double v = img.at(i, j, img.c == 1 ? 0 : ch);
        v = std::clamp(v, 0.0, 1.0);
        raw.push_back((unsigned char)std::lround(v * 255.0));
      }
    }
  }
  uLongf comp_len = compressBound(uLong(raw.size()));
  std::vector<unsigned char> comp(comp_len);
  if (compress2(comp.data(), &comp_len, raw.data(), uLong(raw.size()), 6) != Z_OK)
    throw IoError("save_png: deflate failed");
  comp.resize(comp_len);

  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path + " for writing");
  static const unsigned char sig[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
  out.write(reinterpret_cast<const char*>(sig), 8);
  std::vector<unsigned char> ihdr;
  put_u32(ihdr, uint32_t(img.w));
  put_u32(ihdr, uint32_t(img.h));
  ihdr.push_back(8);                                // bit depth
  ihdr.push_back(out_c == 4 ? 6 : 2);               // color type
  ihdr.push_back(0);
  ihdr.push_back(0);
  ihdr.push_back(0);
  write_chunk(out, "IHDR", ihdr);
  write_chunk(out, "IDAT", comp);
  write_chunk(out, "IEND", {});
  if (!out) throw IoError("write failed for " + path);
}

Image load_png(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::vector<unsigned char> file((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  if (file.size() < 8 || std::memcmp(file.data(), "\x89PNG\r\n\x1a\n", 8) != 0)
    throw IoError(path + ": not a PNG");
  size_t pos = 8;
  int w = 0, h = 0, channels = 0;
  std::vector<unsigned char> idat;
  while (pos + 8 <= file.size()) {
    uint32_t len = read_u32(&file[pos]);
    std::string type(reinterpret_cast<const char*>(&file[pos + 4]), 4);
    const unsigned char* data = &file[pos + 8];
    if (type == "IHDR") {
      w = int(read_u32(data));
      h = int(read_u32(data + 4));
      if (data[8] != 8) throw IoError(path + ": only 8-bit PNGs supported");
      if (data[9] == 2) channels = 3;
      else if (data[9] == 6) channels = 4;
      else throw IoError(path + ": only RGB / RGBA PNGs supported");
      if (data[12] != 0) throw IoError(path + ": interlaced PNGs not supported");
    } else if (type == "IDAT") {
      idat.insert(idat.end(), data, data + len);
    } else if (type == "IEND") {
      break;
    }
    pos += 12 + len;
  }
  if (w <= 0 || h <= 0 || idat.empty()) throw IoError(path + ": missing IHDR/IDAT");

  size_t stride = size_t(w) * channels;
  std::vector<unsigned char> raw(size_t(h) * (stride + 1));
  uLongf raw_len = uLongf(raw.size());
  if (uncompress(raw.data(), &raw_len, idat.data(), uLong(idat.size())) != Z_OK ||
      raw_len != raw.size())
    throw IoError(path + ": inflate failed");

  // unfilter
  std::vector<unsigned char> pix(size_t(h) * stride);
  int bpp = channels;
  for (int i = 0; i < h; ++i) {
    unsigned char filter = raw[size_t(i) * (stride + 1)];
    const unsigned char* src = &raw[size_t(i) * (stride + 1) + 1];
    unsigned char* dst = &pix[size_t(i) * stride];
    const unsigned char* up = i > 0 ? &pix[size_t(i - 1) * stride] : nullptr;
    for (size_t x = 0; x < stride; ++x) {
      int a = x >= size_t(bpp) ? dst[x - size_t(bpp)] : 0;
      int b = up ? up[x] : 0;
      int c = (up && x >= size_t(bpp)) ? up[x - size_t(bpp)] : 0;
      int v = src[x];
      switch (filter) {
        case 0: break;
        case 1: v += a; break;
        case 2: v += b; break;
        case 3: v += (a + b) / 2; break;
        case 4: v += paeth(a, b, c); break;
        default: throw IoError(path + ": unknown filter type");
      }
      dst[x] = (unsigned char)v;
    }
  }

  Image img;
  img.h = h;
  img.w = w;
  img.c = channels;
  img.data.resize(size_t(h) * stride);
  for (size_t i = 0; i < img.data.size(); ++i) img.data[i] = pix[i] / 255.0;
  return img;
}

}  // namespace dr
