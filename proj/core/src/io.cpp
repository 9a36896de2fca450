#include "cvheat/io.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace cvheat::io {

namespace {

void put_i32(std::ostream& out, std::int32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((static_cast<std::uint32_t>(v) >> (8 * i)) & 0xff);
  out.write(reinterpret_cast<const char*>(b), 4);
}

std::int32_t get_i32(std::istream& in) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  if (!in) throw std::runtime_error("binary read: truncated stream");
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
  return static_cast<std::int32_t>(v);
}

void put_f32(std::ostream& out, float f) {
  std::uint32_t v;
  std::memcpy(&v, &f, 4);
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
  out.write(reinterpret_cast<const char*>(b), 4);
}

float get_f32(std::istream& in) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  if (!in) throw std::runtime_error("binary read: truncated stream");
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
  float f;
  std::memcpy(&f, &v, 4);
  return f;
}

std::ofstream open_out(const std::string& path, bool binary) {
  std::ofstream out(path, binary ? std::ios::binary : std::ios::out);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  return out;
}

std::ifstream open_in(const std::string& path, bool binary) {
  std::ifstream in(path, binary ? std::ios::binary : std::ios::in);
  if (!in) throw std::runtime_error("cannot open for reading: " + path);
  return in;
}

}  // namespace

void write_event_tensor(std::ostream& out, const events::EventTensor& t) {
  put_i32(out, t.channels());
  put_i32(out, t.height());
  put_i32(out, t.width());
  put_i32(out, static_cast<std::int32_t>(t.encoding));
  for (double v : t.data.data) put_f32(out, static_cast<float>(v));
}

events::EventTensor read_event_tensor(std::istream& in) {
  const int c = get_i32(in), h = get_i32(in), w = get_i32(in), tag = get_i32(in);
  if (c <= 0 || h <= 0 || w <= 0) throw std::runtime_error("event tensor: bad header");
  if (tag != 0 && tag != 1) throw std::runtime_error("event tensor: bad encoding tag");
  events::EventTensor t;
  t.encoding = static_cast<events::Encoding>(tag);
  t.data = Tensor({c, h, w});
  for (double& v : t.data.data) v = get_f32(in);
  return t;
}

void write_event_tensor_file(const std::string& path, const events::EventTensor& t) {
  auto out = open_out(path, true);
  write_event_tensor(out, t);
}

events::EventTensor read_event_tensor_file(const std::string& path) {
  auto in = open_in(path, true);
  return read_event_tensor(in);
}

void save_checkpoint(const std::string& path, const nn::ParamStore& params) {
  auto out = open_out(path, true);
  out.write("CVHT", 4);
  put_i32(out, static_cast<std::int32_t>(params.all().size()));
  for (const nn::Parameter& p : params.all()) {
    put_i32(out, static_cast<std::int32_t>(p.name.size()));
    out.write(p.name.data(), static_cast<std::streamsize>(p.name.size()));
    put_i32(out, static_cast<std::int32_t>(p.value.shape.size()));
    for (int d : p.value.shape) put_i32(out, d);
  }
  for (const nn::Parameter& p : params.all())
    for (double v : p.value.data) put_f32(out, static_cast<float>(v));
}

void load_checkpoint(const std::string& path, nn::ParamStore& params) {
  auto in = open_in(path, true);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::strncmp(magic, "CVHT", 4) != 0)
    throw std::runtime_error("checkpoint: bad magic in " + path);
  const int count = get_i32(in);
  struct Entry {
    std::string name;
    std::vector<int> shape;
  };
  std::vector<Entry> table(count);
  for (Entry& e : table) {
    const int len = get_i32(in);
    e.name.resize(len);
    in.read(e.name.data(), len);
    const int ndim = get_i32(in);
    e.shape.resize(ndim);
    for (int& d : e.shape) d = get_i32(in);
    if (!in) throw std::runtime_error("checkpoint: truncated name table");
  }
  for (const Entry& e : table) {
    nn::Parameter* p = params.find(e.name);
    if (!p) throw std::runtime_error("checkpoint: unknown parameter " + e.name);
    if (p->value.shape != e.shape)
      throw std::runtime_error("checkpoint: shape mismatch for " + e.name);
    for (double& v : p->value.data) v = get_f32(in);
  }
}

void write_events_csv(const std::string& path, const std::vector<events::Event>& evs) {
  auto out = open_out(path, false);
  for (const events::Event& e : evs)
    out << e.x << "," << e.y << "," << e.t << "," << e.p << "\n";
}

std::vector<events::Event> read_events_csv(const std::string& path, int width, int height) {
  auto in = open_in(path, false);
  return events::parse_events(in, width, height);
}

void write_detections(const std::string& path, const std::vector<det::EvalDetection>& dets) {
  auto out = open_out(path, false);
  out << std::fixed << std::setprecision(6);
  for (const det::EvalDetection& d : dets) {
    const auto c = d.box.corners();
    out << d.image_id << " " << d.class_id << " " << d.score << " " << c.x1 << " " << c.y1 << " "
        << c.x2 << " " << c.y2 << "\n";
  }
}

namespace {

std::vector<det::EvalDetection> read_records(const std::string& path) {
  auto in = open_in(path, false);
  std::vector<det::EvalDetection> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream ss(line);
    det::EvalDetection d;
    double x1, y1, x2, y2;
    if (!(ss >> d.image_id >> d.class_id >> d.score >> x1 >> y1 >> x2 >> y2))
      throw std::runtime_error("detections: " + path + ": malformed line " +
                               std::to_string(line_no));
    d.box = det::Box::from_corners(x1, y1, x2, y2);
    out.push_back(d);
  }
  return out;
}

}  // namespace

std::vector<det::EvalDetection> read_detections(const std::string& path) {
  return read_records(path);
}

void write_ground_truth(const std::string& path,
                        const std::vector<std::vector<det::GroundTruth>>& gts_per_image) {
  auto out = open_out(path, false);
  out << std::fixed << std::setprecision(6);
  for (std::size_t img = 0; img < gts_per_image.size(); ++img)
    for (const det::GroundTruth& g : gts_per_image[img]) {
      const auto c = g.box.corners();
      out << img << " " << g.class_id << " " << 1.0 << " " << c.x1 << " " << c.y1 << " " << c.x2
          << " " << c.y2 << "\n";
    }
}

std::vector<det::EvalGroundTruth> read_ground_truth(const std::string& path) {
  std::vector<det::EvalGroundTruth> out;
  for (const det::EvalDetection& d : read_records(path)) {
    det::EvalGroundTruth g;
    g.image_id = d.image_id;
    g.class_id = d.class_id;
    g.box = d.box;
    out.push_back(g);
  }
  return out;
}

std::vector<std::vector<det::GroundTruth>> group_ground_truth(
    const std::vector<det::EvalGroundTruth>& flat, std::size_t n_images) {
  std::vector<std::vector<det::GroundTruth>> out(n_images);
  for (const auto& g : flat) {
    if (g.image_id < 0 || static_cast<std::size_t>(g.image_id) >= n_images)
      throw std::runtime_error("ground truth: image id " + std::to_string(g.image_id) +
                               " outside the sliced stream (" + std::to_string(n_images) +
                               " slices)");
    out[g.image_id].push_back({g.class_id, g.box});
  }
  return out;
}

namespace {

void dump_graph(std::ostream& out, const std::string& name, const graph::SpatialGraph& g) {
  out << "graph " << name << "\n";
  out << "nodes " << g.node_count() << "\n";
  out << std::fixed << std::setprecision(4);
  for (int i = 0; i < g.node_count(); ++i) {
    const auto& n = g.nodes[i];
    out << i << " " << n.x << " " << n.y << " " << n.feat.size();
    for (double f : n.feat) out << " " << f;
    out << "\n";
  }
  out << "edges " << g.edge_count() << "\n";
  for (auto [a, b] : g.edges) out << a << " " << b << "\n";
}

}  // namespace

void write_bundle_dump(std::ostream& out, const graph::GraphBundle& bundle) {
  dump_graph(out, "global", bundle.global);
  out << "subgraphs " << bundle.subgraphs.size() << "\n";
  for (std::size_t i = 0; i < bundle.subgraphs.size(); ++i)
    dump_graph(out, "subgraph." + std::to_string(i), bundle.subgraphs[i]);
  dump_graph(out, "contour", bundle.contour);
}

Tensor heatmap_of(const Tensor& chw) {
  if (chw.ndim() != 3) throw std::invalid_argument("heatmap_of: rank-3 input required");
  const int c = chw.shape[0], h = chw.shape[1], w = chw.shape[2];
  Tensor map({h, w});
  for (int i = 0; i < h; ++i)
    for (int j = 0; j < w; ++j) {
      double s = 0.0;
      for (int ch = 0; ch < c; ++ch) {
        const double v = chw.at3(ch, i, j);
        s += v * v;
      }
      map.at2(i, j) = std::sqrt(s);
    }
  return map;
}

void write_pgm(const std::string& path, const Tensor& map2d) {
  if (map2d.ndim() != 2) throw std::invalid_argument("write_pgm: rank-2 input required");
  const int h = map2d.shape[0], w = map2d.shape[1];
  double mx = 0.0;
  for (double v : map2d.data) mx = std::max(mx, v);
  auto out = open_out(path, false);
  out << "P2\n" << w << " " << h << "\n255\n";
  for (int i = 0; i < h; ++i) {
    for (int j = 0; j < w; ++j) {
      const int g = mx > 0.0 ? static_cast<int>(std::lround(map2d.at2(i, j) / mx * 255.0)) : 0;
      out << g << (j + 1 < w ? " " : "");
    }
    out << "\n";
  }
}

}  // namespace cvheat::io
