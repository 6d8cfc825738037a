#include "depgraph/io.hpp"

#include <algorithm>
#include <bit>
#include <cctype>
#include <cmath>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>

#include "depgraph/errors.hpp"

namespace depgraph {

static_assert(std::endian::native == std::endian::little, "file formats assume a little-endian host");

namespace {

class Writer {
 public:
  explicit Writer(const fs::path& path) : path_(path) {
    if (path.has_parent_path()) {
      std::error_code ec;
      fs::create_directories(path.parent_path(), ec);
    }
    out_.open(path, std::ios::binary | std::ios::trunc);
    if (!out_) throw IoError("cannot open '" + path.string() + "' for writing");
  }
  void bytes(const void* p, std::size_t n) { out_.write(static_cast<const char*>(p), static_cast<std::streamsize>(n)); }
  void magic(const char (&m)[5]) { bytes(m, 4); }
  void u32(std::uint32_t v) { bytes(&v, 4); }
  void i32(std::int32_t v) { bytes(&v, 4); }
  void f32(double v) {
    const auto f = static_cast<float>(v);
    bytes(&f, 4);
  }
  void close() {
    out_.close();
    if (!out_) throw IoError("failed writing '" + path_.string() + "'");
  }

 private:
  fs::path path_;
  std::ofstream out_;
};

class Reader {
 public:
  explicit Reader(const fs::path& path) : path_(path), in_(path, std::ios::binary) {
    if (!in_) throw IoError("cannot open '" + path.string() + "'");
  }
  void bytes(void* p, std::size_t n) {
    in_.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in_.gcount()) != n) throw IoError("'" + path_.string() + "' is truncated");
  }
  std::string magic() {
    char m[4];
    bytes(m, 4);
    return std::string(m, 4);
  }
  std::uint32_t u32() {
    std::uint32_t v;
    bytes(&v, 4);
    return v;
  }
  std::int32_t i32() {
    std::int32_t v;
    bytes(&v, 4);
    return v;
  }
  double f32() {
    float f;
    bytes(&f, 4);
    return f;
  }
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
  std::ifstream in_;
};

std::uint32_t to_u32(std::size_t v, const char* what) {
  if (v > 0xffffffffu) throw IoError(std::string(what) + " does not fit a 32-bit header field");
  return static_cast<std::uint32_t>(v);
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

fs::path mask_path(const fs::path& video) { return fs::path(video.string() + ".mask"); }

void skip_pgm_space(std::istream& in) {
  while (true) {
    const int c = in.peek();
    if (c == '#') {
      std::string ignored;
      std::getline(in, ignored);
    } else if (std::isspace(c)) {
      in.get();
    } else {
      return;
    }
  }
}

}  // namespace

std::vector<ManifestEntry> read_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest '" + path.string() + "'");
  std::string line;
  if (!std::getline(in, line) || split_csv(line) != std::vector<std::string>{"id", "path", "bdi_score", "split"}) {
    throw DomainError("manifest '" + path.string() + "' must start with the header id,path,bdi_score,split");
  }
  std::vector<ManifestEntry> entries;
  std::set<std::string> seen;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto cells = split_csv(line);
    const std::string where = path.string() + ":" + std::to_string(lineno);
    if (cells.size() != 4) throw DomainError(where + ": expected 4 fields");
    ManifestEntry e;
    e.id = cells[0];
    e.path = cells[1];
    try {
      std::size_t used = 0;
      e.bdi_score = std::stoi(cells[2], &used);
      if (used != cells[2].size()) throw std::invalid_argument("trailing characters");
    } catch (const std::exception&) {
      throw DomainError(where + ": bdi_score '" + cells[2] + "' is not an integer");
    }
    bucket_severity(e.bdi_score);
    e.split = parse_split(cells[3]);
    if (e.id.empty()) throw DomainError(where + ": empty id");
    if (!seen.insert(e.id).second) throw DomainError(where + ": duplicate id '" + e.id + "'");
    entries.push_back(std::move(e));
  }
  return entries;
}

void write_manifest(const fs::path& path, const std::vector<ManifestEntry>& entries) {
  std::ostringstream out;
  out << "id,path,bdi_score,split\n";
  for (const auto& e : entries) {
    if (e.id.find_first_of(",\n") != std::string::npos || e.path.find_first_of(",\n") != std::string::npos) {
      throw DomainError("manifest fields may not contain commas or newlines: '" + e.id + "'");
    }
    out << e.id << ',' << e.path << ',' << e.bdi_score << ',' << to_string(e.split) << '\n';
  }
  write_text_file(path, out.str());
}

void write_video_tensor(const fs::path& path, const VideoSample& video, VideoDtype dtype) {
  if (video.frames.size() != video.num_frames * video.frame_size()) {
    throw DomainError("video '" + video.id + "' frame buffer does not match its shape");
  }
  Writer w(path);
  w.magic("DGVT");
  w.u32(static_cast<std::uint32_t>(dtype));
  w.u32(to_u32(video.num_frames, "frame count"));
  w.u32(to_u32(video.height, "height"));
  w.u32(to_u32(video.width, "width"));
  w.u32(to_u32(video.channels, "channels"));
  if (dtype == VideoDtype::u8) {
    w.bytes(video.frames.data(), video.frames.size());
  } else {
    for (std::uint8_t b : video.frames) w.f32(b / 255.0);
  }
  w.close();

  const fs::path mp = mask_path(path);
  if (std::all_of(video.frame_valid.begin(), video.frame_valid.end(), [](std::uint8_t f) { return f != 0; })) {
    std::error_code ec;
    fs::remove(mp, ec);
  } else {
    Writer m(mp);
    for (std::uint8_t f : video.frame_valid) {
      const std::uint8_t b = f ? 1 : 0;
      m.bytes(&b, 1);
    }
    m.close();
  }
}

VideoSample read_video_tensor(const fs::path& path) {
  Reader r(path);
  if (r.magic() != "DGVT") throw IoError("'" + path.string() + "' is not a video tensor file");
  const std::uint32_t dtype = r.u32();
  VideoSample v;
  v.num_frames = r.u32();
  v.height = r.u32();
  v.width = r.u32();
  v.channels = r.u32();
  v.frames.resize(v.num_frames * v.frame_size());
  if (dtype == static_cast<std::uint32_t>(VideoDtype::u8)) {
    r.bytes(v.frames.data(), v.frames.size());
  } else if (dtype == static_cast<std::uint32_t>(VideoDtype::f32)) {
    for (auto& b : v.frames) {
      const double x = r.f32();
      if (!std::isfinite(x)) throw DomainError("'" + path.string() + "' holds a non-finite pixel");
      b = static_cast<std::uint8_t>(std::lround(std::clamp(x, 0.0, 1.0) * 255.0));
    }
  } else {
    throw IoError("'" + path.string() + "' has unknown dtype code " + std::to_string(dtype));
  }
  v.frame_valid.assign(v.num_frames, 1);
  const fs::path mp = mask_path(path);
  if (fs::exists(mp)) {
    Reader m(mp);
    m.bytes(v.frame_valid.data(), v.frame_valid.size());
  }
  return v;
}

VideoSample read_frame_directory(const fs::path& dir) {
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir))
    if (entry.is_regular_file() && entry.path().extension() == ".pgm") files.push_back(entry.path());
  std::sort(files.begin(), files.end());
  if (files.empty()) throw IoError("no .pgm frames in '" + dir.string() + "'");
  VideoSample v;
  v.channels = 1;
  for (const auto& f : files) {
    std::ifstream in(f, std::ios::binary);
    std::string magic;
    in >> magic;
    std::size_t w = 0, h = 0, maxval = 0;
    skip_pgm_space(in);
    in >> w;
    skip_pgm_space(in);
    in >> h;
    skip_pgm_space(in);
    in >> maxval;
    if (!in || magic != "P5" || maxval != 255) throw IoError("'" + f.string() + "' is not an 8-bit binary PGM");
    in.get();
    if (v.num_frames == 0) {
      v.height = h;
      v.width = w;
    } else if (h != v.height || w != v.width) {
      throw DomainError("frame '" + f.string() + "' size differs from earlier frames");
    }
    const std::size_t offset = v.frames.size();
    v.frames.resize(offset + w * h);
    in.read(reinterpret_cast<char*>(v.frames.data() + offset), static_cast<std::streamsize>(w * h));
    if (static_cast<std::size_t>(in.gcount()) != w * h) throw IoError("'" + f.string() + "' is truncated");
    ++v.num_frames;
  }
  v.frame_valid.assign(v.num_frames, 1);
  return v;
}

void save_corpus(const Corpus& corpus, const fs::path& dir) {
  std::vector<ManifestEntry> entries;
  for (const auto& v : corpus.samples) {
    const std::string rel = "videos/" + v.id + ".dgvt";
    write_video_tensor(dir / rel, v);
    entries.push_back({v.id, rel, v.bdi_score, corpus.split.at(v.id)});
  }
  write_manifest(dir / "manifest.csv", entries);
}

Corpus load_corpus(const fs::path& manifest) {
  const auto entries = read_manifest(manifest);
  const fs::path base = manifest.parent_path();
  Corpus corpus;
  for (const auto& e : entries) {
    fs::path p(e.path);
    if (p.is_relative()) p = base / p;
    VideoSample v = fs::is_directory(p) ? read_frame_directory(p) : read_video_tensor(p);
    v.id = e.id;
    v.bdi_score = e.bdi_score;
    v.category = bucket_severity(e.bdi_score);
    corpus.split[e.id] = e.split;
    corpus.samples.push_back(std::move(v));
  }
  return corpus;
}

void write_feature_matrix(const fs::path& path, const SliceFeatureMatrix& m) {
  if (m.values.data.size() != m.values.rows * m.values.cols) throw DomainError("feature matrix buffer mismatch");
  Writer w(path);
  w.magic("DGFM");
  w.u32(to_u32(m.values.rows, "slice count"));
  w.u32(to_u32(m.values.cols, "feature dim"));
  for (double x : m.values.data) w.f32(x);
  w.close();
}

SliceFeatureMatrix read_feature_matrix(const fs::path& path, const std::string& parent_id) {
  Reader r(path);
  if (r.magic() != "DGFM") throw IoError("'" + path.string() + "' is not a feature matrix file");
  const std::size_t S = r.u32(), M = r.u32();
  SliceFeatureMatrix m;
  m.parent_id = parent_id;
  m.values = Matrix(S, M);
  for (double& x : m.values.data) x = r.f32();
  return m;
}

namespace {

void write_graph_body(Writer& w, const Matrix& features, const std::vector<std::array<std::int32_t, 3>>& edges) {
  w.u32(to_u32(features.rows, "vertex count"));
  w.u32(to_u32(features.cols, "feature dim"));
  w.u32(to_u32(edges.size(), "edge count"));
  for (double x : features.data) w.f32(x);
  for (const auto& e : edges)
    for (std::int32_t v : e) w.i32(v);
  w.close();
}

}  // namespace

void write_graph(const fs::path& path, const SpectralGraph& g) {
  const std::size_t n = g.num_vertices();
  std::vector<std::array<std::int32_t, 3>> edges;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      if (g.adjacency[i * n + j]) edges.push_back({static_cast<std::int32_t>(i), static_cast<std::int32_t>(j), 0});
  Writer w(path);
  w.magic("SPG1");
  write_graph_body(w, g.vertex_features, edges);
}

void write_graph(const fs::path& path, const SequentialGraph& g) {
  std::vector<std::array<std::int32_t, 3>> edges;
  edges.reserve(g.edges.size());
  for (const auto& e : g.edges) {
    edges.push_back({static_cast<std::int32_t>(e.src), static_cast<std::int32_t>(e.dst),
                     static_cast<std::int32_t>(e.window)});
  }
  Writer w(path);
  w.magic("SEG1");
  write_graph_body(w, g.vertex_features, edges);
}

GraphFile read_graph(const fs::path& path) {
  Reader r(path);
  const std::string magic = r.magic();
  GraphFile g;
  if (magic == "SPG1") {
    g.kind = GraphKind::spectral;
  } else if (magic == "SEG1") {
    g.kind = GraphKind::sequential;
  } else {
    throw IoError("'" + path.string() + "' is not a graph file");
  }
  const std::size_t V = r.u32(), F = r.u32(), E = r.u32();
  g.features = Matrix(V, F);
  for (double& x : g.features.data) x = r.f32();
  g.edges.resize(E);
  for (auto& e : g.edges) {
    for (auto& v : e) v = r.i32();
    if (e[0] < 0 || e[1] < 0 || static_cast<std::size_t>(e[0]) >= V || static_cast<std::size_t>(e[1]) >= V) {
      throw DomainError("'" + path.string() + "' has an edge outside the vertex range");
    }
  }
  return g;
}

SpectralGraph to_spectral_graph(const GraphFile& file) {
  if (file.kind != GraphKind::spectral) throw ConfigError("graph file holds a sequential graph, expected spectral");
  SpectralGraph g;
  const std::size_t n = file.features.rows;
  g.vertex_features = file.features;
  g.adjacency.assign(n * n, 0);
  for (const auto& e : file.edges) g.adjacency[static_cast<std::size_t>(e[0]) * n + static_cast<std::size_t>(e[1])] = 1;
  g.channel_ids.resize(n);
  for (std::size_t i = 0; i < n; ++i) g.channel_ids[i] = static_cast<std::int32_t>(i);
  return g;
}

SequentialGraph to_sequential_graph(const GraphFile& file) {
  if (file.kind != GraphKind::sequential) throw ConfigError("graph file holds a spectral graph, expected sequential");
  SequentialGraph g;
  g.vertex_features = file.features;
  std::set<std::size_t> windows;
  for (const auto& e : file.edges) {
    if (e[2] <= 0) throw DomainError("sequential graph edge with non-positive window");
    g.edges.push_back({static_cast<std::uint32_t>(e[0]), static_cast<std::uint32_t>(e[1]),
                       static_cast<std::uint32_t>(e[2])});
    windows.insert(static_cast<std::size_t>(e[2]));
  }
  g.windows.assign(windows.begin(), windows.end());
  return g;
}

void quantize_f32(std::vector<double>& values) {
  for (double& v : values) v = static_cast<float>(v);
}

std::string read_text_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const fs::path& path, const std::string& text) {
  Writer w(path);
  w.bytes(text.data(), text.size());
  w.close();
}

}  // namespace depgraph
