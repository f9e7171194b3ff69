#pragma once

// File formats: PFM/PGM rasters, camera JSON, OBJ/PLY meshes, loss CSV and
// network checkpoints.

#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "thermopol/errors.hpp"
#include "thermopol/mesh.hpp"
#include "thermopol/raster.hpp"
#include "thermopol/reconstruct.hpp"
#include "thermopol/scene.hpp"
#include "thermopol/sdf_network.hpp"

namespace thermopol::io {

namespace fs = std::filesystem;

static_assert(std::endian::native == std::endian::little, "binary formats assume a little-endian host");

namespace detail {

inline std::ofstream open_out(const fs::path& path, bool binary = true) {
  if (path.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
  }
  std::ofstream out(path, binary ? std::ios::binary : std::ios::out);
  if (!out) throw IoError("cannot write " + path.string());
  return out;
}

inline std::ifstream open_in(const fs::path& path, bool binary = true) {
  std::ifstream in(path, binary ? std::ios::binary : std::ios::in);
  if (!in) throw IoError("cannot read " + path.string());
  return in;
}

inline void finish(std::ofstream& out, const fs::path& path) {
  out.flush();
  if (!out) throw IoError("write failed for " + path.string());
}

// Reads one whitespace-delimited header token, skipping '#' comments.
inline std::string header_token(std::istream& in, const fs::path& path) {
  std::string tok;
  while (in >> tok) {
    if (tok[0] != '#') return tok;
    std::string rest;
    std::getline(in, rest);
  }
  throw IoError("truncated header in " + path.string());
}

inline int header_int(std::istream& in, const fs::path& path) {
  const std::string tok = header_token(in, path);
  try {
    std::size_t used = 0;
    const int v = std::stoi(tok, &used);
    if (used != tok.size()) throw std::invalid_argument(tok);
    return v;
  } catch (const std::exception&) {
    throw IoError("bad header field '" + tok + "' in " + path.string());
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// PFM: "Pf" (1 channel) or "PF" (3 channels), little-endian (scale -1),
// rows stored bottom-up.

inline void write_pfm(const fs::path& path, const Raster<float>& img) {
  if (img.channels != 1 && img.channels != 3) throw ShapeMismatch("PFM holds 1 or 3 channels");
  auto out = detail::open_out(path);
  out << (img.channels == 3 ? "PF" : "Pf") << "\n" << img.width << " " << img.height << "\n-1.0\n";
  const std::size_t row = static_cast<std::size_t>(img.width) * img.channels;
  for (int y = img.height - 1; y >= 0; --y) {
    out.write(reinterpret_cast<const char*>(img.data.data() + static_cast<std::size_t>(y) * row),
              static_cast<std::streamsize>(row * sizeof(float)));
  }
  detail::finish(out, path);
}

inline Raster<float> read_pfm(const fs::path& path) {
  auto in = detail::open_in(path);
  const std::string magic = detail::header_token(in, path);
  int channels = 0;
  if (magic == "Pf") {
    channels = 1;
  } else if (magic == "PF") {
    channels = 3;
  } else {
    throw IoError("not a PFM file: " + path.string());
  }
  const int w = detail::header_int(in, path);
  const int h = detail::header_int(in, path);
  const std::string scale_tok = detail::header_token(in, path);
  double scale = 0.0;
  try {
    scale = std::stod(scale_tok);
  } catch (const std::exception&) {
    throw IoError("bad PFM scale in " + path.string());
  }
  if (w <= 0 || h <= 0) throw IoError("bad PFM size in " + path.string());
  in.get();  // single whitespace before the payload
  Raster<float> img(w, h, channels);
  const std::size_t row = static_cast<std::size_t>(w) * channels;
  for (int y = h - 1; y >= 0; --y) {
    in.read(reinterpret_cast<char*>(img.data.data() + static_cast<std::size_t>(y) * row),
            static_cast<std::streamsize>(row * sizeof(float)));
  }
  if (!in) throw IoError("truncated PFM payload in " + path.string());
  if (scale > 0.0) {
    for (auto& v : img.data) v = std::bit_cast<float>(__builtin_bswap32(std::bit_cast<std::uint32_t>(v)));
  }
  return img;
}

// ---------------------------------------------------------------------------
// PGM (P5, 8-bit) masks, written as 0 / 255.

inline void write_pgm(const fs::path& path, const Mask& mask) {
  auto out = detail::open_out(path);
  out << "P5\n" << mask.width << " " << mask.height << "\n255\n";
  std::vector<unsigned char> bytes(mask.data.size());
  for (std::size_t i = 0; i < bytes.size(); ++i) bytes[i] = mask.data[i] ? 255 : 0;
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  detail::finish(out, path);
}

inline Mask read_pgm(const fs::path& path) {
  auto in = detail::open_in(path);
  if (detail::header_token(in, path) != "P5") throw IoError("not a binary PGM: " + path.string());
  const int w = detail::header_int(in, path);
  const int h = detail::header_int(in, path);
  const int maxval = detail::header_int(in, path);
  if (w <= 0 || h <= 0 || maxval <= 0 || maxval > 255) throw IoError("unsupported PGM in " + path.string());
  in.get();
  std::vector<unsigned char> bytes(static_cast<std::size_t>(w) * h);
  in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!in) throw IoError("truncated PGM payload in " + path.string());
  Mask m(w, h);
  for (std::size_t i = 0; i < bytes.size(); ++i) m.data[i] = bytes[i] * 2 > maxval ? 1 : 0;
  return m;
}

// ---------------------------------------------------------------------------
// Cameras

inline nlohmann::json cameras_to_json(const std::vector<CameraView>& views) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& v : views) {
    std::vector<double> r(9), t(3);
    for (int i = 0; i < 3; ++i) {
      for (int j = 0; j < 3; ++j) r[static_cast<std::size_t>(3 * i + j)] = v.rotation()(i, j);
      t[static_cast<std::size_t>(i)] = v.translation()(i);
    }
    arr.push_back({{"fx", v.fx()}, {"fy", v.fy()}, {"cx", v.cx()}, {"cy", v.cy()},
                   {"width", v.width()}, {"height", v.height()}, {"R", r}, {"t", t}});
  }
  return {{"views", arr}};
}

inline std::vector<CameraView> cameras_from_json(const nlohmann::json& doc) {
  std::vector<CameraView> views;
  try {
    for (const auto& c : doc.at("views")) {
      Intrinsics k;
      k.fx = c.at("fx").get<double>();
      k.fy = c.at("fy").get<double>();
      k.cx = c.at("cx").get<double>();
      k.cy = c.at("cy").get<double>();
      k.width = c.at("width").get<int>();
      k.height = c.at("height").get<int>();
      const auto r = c.at("R").get<std::vector<double>>();
      const auto t = c.at("t").get<std::vector<double>>();
      if (r.size() != 9 || t.size() != 3) throw ConfigError("camera R needs 9 values and t 3");
      Mat3 rot;
      for (int i = 0; i < 9; ++i) rot(i / 3, i % 3) = r[static_cast<std::size_t>(i)];
      views.emplace_back(k, rot, Vec3(t[0], t[1], t[2]));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed camera description: ") + e.what());
  } catch (const DomainError& e) {
    throw ConfigError(std::string("invalid camera: ") + e.what());
  }
  return views;
}

inline void write_json(const fs::path& path, const nlohmann::json& doc) {
  auto out = detail::open_out(path, false);
  out << doc.dump(2) << "\n";
  detail::finish(out, path);
}

inline nlohmann::json read_json(const fs::path& path) {
  auto in = detail::open_in(path, false);
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("invalid JSON in " + path.string() + ": " + e.what());
  }
}

// ---------------------------------------------------------------------------
// Meshes

inline void write_obj(const fs::path& path, const Mesh& mesh) {
  auto out = detail::open_out(path, false);
  out << std::setprecision(std::numeric_limits<double>::max_digits10);
  for (const auto& v : mesh.vertices) out << "v " << v.x() << " " << v.y() << " " << v.z() << "\n";
  for (const auto& f : mesh.faces) out << "f " << f[0] + 1 << " " << f[1] + 1 << " " << f[2] + 1 << "\n";
  detail::finish(out, path);
}

inline void write_ply(const fs::path& path, const Mesh& mesh) {
  auto out = detail::open_out(path, false);
  out << "ply\nformat ascii 1.0\nelement vertex " << mesh.vertices.size()
      << "\nproperty double x\nproperty double y\nproperty double z\nelement face " << mesh.faces.size()
      << "\nproperty list uchar int vertex_indices\nend_header\n";
  out << std::setprecision(std::numeric_limits<double>::max_digits10);
  for (const auto& v : mesh.vertices) out << v.x() << " " << v.y() << " " << v.z() << "\n";
  for (const auto& f : mesh.faces) out << "3 " << f[0] << " " << f[1] << " " << f[2] << "\n";
  detail::finish(out, path);
}

inline Mesh read_obj(const fs::path& path) {
  auto in = detail::open_in(path, false);
  Mesh mesh;
  std::string line;
  while (std::getline(in, line)) {
    std::istringstream ls(line);
    std::string tag;
    ls >> tag;
    if (tag == "v") {
      Vec3 v;
      if (!(ls >> v.x() >> v.y() >> v.z())) throw IoError("bad vertex in " + path.string());
      mesh.vertices.push_back(v);
    } else if (tag == "f") {
      std::vector<int> idx;
      std::string tok;
      while (ls >> tok) {
        const int i = std::stoi(tok.substr(0, tok.find('/')));
        idx.push_back(i > 0 ? i - 1 : static_cast<int>(mesh.vertices.size()) + i);
      }
      if (idx.size() < 3) throw IoError("bad face in " + path.string());
      for (std::size_t k = 1; k + 1 < idx.size(); ++k) mesh.faces.push_back({idx[0], idx[k], idx[k + 1]});
    }
  }
  for (const auto& f : mesh.faces) {
    for (int i : f) {
      if (i < 0 || i >= static_cast<int>(mesh.vertices.size())) {
        throw IoError("face index out of range in " + path.string());
      }
    }
  }
  return mesh;
}

/// ASCII PLY with x, y, z as the first vertex properties and triangle lists.
inline Mesh read_ply(const fs::path& path) {
  auto in = detail::open_in(path, false);
  std::string line;
  std::size_t n_vertices = 0, n_faces = 0;
  int vertex_props = 0;
  std::string current;
  if (!std::getline(in, line) || line.rfind("ply", 0) != 0) throw IoError("not a PLY file: " + path.string());
  while (std::getline(in, line)) {
    std::istringstream ls(line);
    std::string tag;
    ls >> tag;
    if (tag == "format") {
      std::string fmt;
      ls >> fmt;
      if (fmt != "ascii") throw IoError("only ASCII PLY is supported: " + path.string());
    } else if (tag == "element") {
      std::size_t count = 0;
      ls >> current >> count;
      if (current == "vertex") n_vertices = count;
      if (current == "face") n_faces = count;
    } else if (tag == "property" && current == "vertex") {
      ++vertex_props;
    } else if (tag == "end_header") {
      break;
    }
  }
  Mesh mesh;
  for (std::size_t i = 0; i < n_vertices; ++i) {
    if (!std::getline(in, line)) throw IoError("truncated PLY vertices in " + path.string());
    std::istringstream ls(line);
    Vec3 v;
    if (!(ls >> v.x() >> v.y() >> v.z())) throw IoError("bad PLY vertex in " + path.string());
    mesh.vertices.push_back(v);
  }
  for (std::size_t i = 0; i < n_faces; ++i) {
    if (!std::getline(in, line)) throw IoError("truncated PLY faces in " + path.string());
    std::istringstream ls(line);
    int n = 0;
    ls >> n;
    std::vector<int> idx(static_cast<std::size_t>(std::max(n, 0)));
    for (auto& k : idx) ls >> k;
    if (n < 3 || !ls) throw IoError("bad PLY face in " + path.string());
    for (int k : idx) {
      if (k < 0 || k >= static_cast<int>(mesh.vertices.size())) throw IoError("face index out of range in " + path.string());
    }
    for (std::size_t k = 1; k + 1 < idx.size(); ++k) mesh.faces.push_back({idx[0], idx[k], idx[k + 1]});
  }
  (void)vertex_props;
  return mesh;
}

inline void write_mesh(const fs::path& path, const Mesh& mesh) {
  const auto ext = path.extension().string();
  if (ext == ".obj") return write_obj(path, mesh);
  if (ext == ".ply") return write_ply(path, mesh);
  throw ConfigError("mesh output must end in .obj or .ply: " + path.string());
}

inline Mesh read_mesh(const fs::path& path) {
  const auto ext = path.extension().string();
  if (ext == ".obj") return read_obj(path);
  if (ext == ".ply") return read_ply(path);
  throw ConfigError("mesh input must end in .obj or .ply: " + path.string());
}

// ---------------------------------------------------------------------------
// Loss history

inline void write_loss_csv(const fs::path& path, const std::vector<EpochLoss>& history) {
  auto out = detail::open_out(path, false);
  out << "epoch,L_TSC,L_sil,L_eik,total\n" << std::setprecision(9);
  for (const auto& e : history) {
    out << e.epoch << "," << e.tsc << "," << e.silhouette << "," << e.eikonal << "," << e.total << "\n";
  }
  detail::finish(out, path);
}

// ---------------------------------------------------------------------------
// Checkpoint: magic, version, architecture, float32 parameters, Adam state.

inline constexpr char kCheckpointMagic[8] = {'T', 'P', 'S', 'D', 'F', 'C', 'K', '\0'};
inline constexpr std::uint32_t kCheckpointVersion = 2;

namespace detail {

template <typename T>
void put(std::ostream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& in, const fs::path& path) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw IoError("truncated checkpoint " + path.string());
  return v;
}

inline void put_floats(std::ostream& out, const std::vector<MatrixX<float>>& ms) {
  for (const auto& m : ms) out.write(reinterpret_cast<const char*>(m.data()), static_cast<std::streamsize>(m.size() * sizeof(float)));
}

inline void get_floats(std::istream& in, std::vector<MatrixX<float>>& ms, const fs::path& path) {
  for (auto& m : ms) {
    in.read(reinterpret_cast<char*>(m.data()), static_cast<std::streamsize>(m.size() * sizeof(float)));
    if (!in) throw IoError("truncated checkpoint " + path.string());
  }
}

}  // namespace detail

struct Checkpoint {
  SdfNetwork<float> net;
  AdamState<float> adam;
};

inline void write_checkpoint(const fs::path& path, const SdfNetwork<float>& net, const AdamState<float>& adam) {
  auto out = detail::open_out(path);
  const NetworkArch& a = net.arch();
  out.write(kCheckpointMagic, sizeof(kCheckpointMagic));
  detail::put(out, kCheckpointVersion);
  for (int v : {a.width, a.hidden_layers, a.num_frequencies, a.skip_layer}) detail::put(out, static_cast<std::int32_t>(v));
  detail::put(out, a.softplus_beta);
  detail::put(out, a.init_radius);
  detail::put(out, static_cast<std::uint64_t>(net.parameter_count()));
  detail::put_floats(out, net.parameters());
  for (float w : net.encoding().band_weights()) detail::put(out, w);
  detail::put(out, static_cast<std::int64_t>(adam.step));
  for (double v : {adam.learning_rate, adam.beta1, adam.beta2, adam.epsilon}) detail::put(out, v);
  const bool has_moments = adam.first_moment.size() == net.parameters().size();
  detail::put(out, static_cast<std::uint8_t>(has_moments));
  if (has_moments) {
    detail::put_floats(out, adam.first_moment);
    detail::put_floats(out, adam.second_moment);
  }
  detail::finish(out, path);
}

inline Checkpoint read_checkpoint(const fs::path& path) {
  auto in = detail::open_in(path);
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0) {
    throw IoError("not a checkpoint file: " + path.string());
  }
  const auto version = detail::get<std::uint32_t>(in, path);
  if (version != kCheckpointVersion) throw IoError("unsupported checkpoint version in " + path.string());
  NetworkArch a;
  a.width = detail::get<std::int32_t>(in, path);
  a.hidden_layers = detail::get<std::int32_t>(in, path);
  a.num_frequencies = detail::get<std::int32_t>(in, path);
  a.skip_layer = detail::get<std::int32_t>(in, path);
  a.softplus_beta = detail::get<double>(in, path);
  a.init_radius = detail::get<double>(in, path);
  if (a.width < 1 || a.width > 4096 || a.hidden_layers < 1 || a.hidden_layers > 64 || a.num_frequencies < 0 ||
      a.num_frequencies > 32 || a.skip_layer < 0 || a.skip_layer >= a.hidden_layers) {
    throw IoError("corrupt architecture header in " + path.string());
  }
  Checkpoint ck{SdfNetwork<float>(a, 0), {}};
  if (detail::get<std::uint64_t>(in, path) != ck.net.parameter_count()) {
    throw IoError("parameter count mismatch in " + path.string());
  }
  detail::get_floats(in, ck.net.parameters(), path);
  std::vector<float> bands(static_cast<std::size_t>(a.num_frequencies));
  for (float& w : bands) {
    w = detail::get<float>(in, path);
    if (!(w >= 0.0f && w <= 1.0f)) throw IoError("corrupt band weights in " + path.string());
  }
  ck.net.encoding().set_band_weights(std::move(bands));
  const auto step = detail::get<std::int64_t>(in, path);
  const auto lr = detail::get<double>(in, path);
  ck.adam = AdamState<float>(ck.net.parameters(), lr);
  ck.adam.step = step;
  ck.adam.beta1 = detail::get<double>(in, path);
  ck.adam.beta2 = detail::get<double>(in, path);
  ck.adam.epsilon = detail::get<double>(in, path);
  if (detail::get<std::uint8_t>(in, path)) {
    detail::get_floats(in, ck.adam.first_moment, path);
    detail::get_floats(in, ck.adam.second_moment, path);
  }
  for (const auto& p : ck.net.parameters()) {
    if (!p.allFinite()) throw IoError("non-finite parameters in " + path.string());
  }
  return ck;
}

// ---------------------------------------------------------------------------
// Dataset directory layout

inline std::string view_file(int view, const std::string& channel, const std::string& ext = ".pfm") {
  std::ostringstream s;
  s << "view_" << std::setw(3) << std::setfill('0') << view << "_" << channel << ext;
  return s.str();
}

/// Loads cameras.json plus per-view AoLP images and masks.
inline MultiViewAolpDataset read_dataset(const fs::path& dir, const Box& bbox, double bounding_radius) {
  const fs::path cams = dir / "cameras.json";
  if (!fs::exists(cams)) throw IoError("missing camera file " + cams.string());
  const auto views = cameras_from_json(read_json(cams));
  if (views.empty()) throw ConfigError("dataset has no views: " + dir.string());
  MultiViewAolpDataset ds;
  ds.bbox = bbox;
  ds.bounding_radius = bounding_radius;
  for (std::size_t i = 0; i < views.size(); ++i) {
    const fs::path aolp = dir / view_file(static_cast<int>(i), "aolp");
    const fs::path mask = dir / view_file(static_cast<int>(i), "mask", ".pgm");
    if (!fs::exists(aolp)) throw IoError("missing AoLP image " + aolp.string());
    if (!fs::exists(mask)) throw IoError("missing mask file " + mask.string());
    AolpView v{views[i], read_pfm(aolp), read_pgm(mask)};
    if (v.aolp.channels != 1) throw IoError("AoLP image must have one channel: " + aolp.string());
    ds.views.push_back(std::move(v));
  }
  try {
    ds.validate();
  } catch (const std::exception& e) {
    throw ConfigError(std::string("inconsistent dataset in ") + dir.string() + ": " + e.what());
  }
  return ds;
}

}  // namespace thermopol::io
