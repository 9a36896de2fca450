#include "cvheat/config.hpp"

#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace cvheat::pipe {

namespace {

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t");
  return s.substr(a, b - a + 1);
}

[[noreturn]] void bad(const std::string& key, const std::string& why) {
  throw std::invalid_argument("config: " + key + ": " + why);
}

int to_int(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const int r = std::stoi(v, &pos);
    if (pos != v.size()) bad(key, "trailing characters in integer");
    return r;
  } catch (const std::invalid_argument&) {
    bad(key, "not an integer: '" + v + "'");
  } catch (const std::out_of_range&) {
    bad(key, "integer out of range");
  }
}

double to_double(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const double r = std::stod(v, &pos);
    if (pos != v.size()) bad(key, "trailing characters in number");
    return r;
  } catch (const std::invalid_argument&) {
    bad(key, "not a number: '" + v + "'");
  } catch (const std::out_of_range&) {
    bad(key, "number out of range");
  }
}

std::array<int, 4> to_int4(const std::string& key, const std::string& v) {
  std::array<int, 4> out{};
  std::stringstream ss(v);
  std::string item;
  int i = 0;
  while (std::getline(ss, item, ',')) {
    if (i >= 4) bad(key, "expected exactly 4 comma-separated integers");
    out[i++] = to_int(key, trim(item));
  }
  if (i != 4) bad(key, "expected exactly 4 comma-separated integers");
  return out;
}

std::string fmt_double(double v) {
  std::ostringstream os;
  os << v;
  return os.str();
}

}  // namespace

const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> keys = {
      "seed",          "resolution",    "slice_interval_us",
      "encoding",      "voxel_bins",    "patch_h",
      "patch_w",       "dist_threshold", "node_threshold",
      "knn_k",         "graph_mode",    "gcn_layers",
      "gcn_width",     "fe_dim",        "k_mode",
      "k_fixed",       "stage_depths",  "stage_widths",
      "num_classes",   "queries",       "lambda_cls",
      "lambda_l1",     "lambda_iou",    "vfl_alpha",
      "vfl_gamma",     "lr",            "weight_decay",
      "train_steps",   "eval_every",    "batch_size",
      "hflip_prob"};
  return keys;
}

std::string to_string(GraphMode m) {
  switch (m) {
    case GraphMode::None: return "none";
    case GraphMode::Global: return "global";
    case GraphMode::Subgraph: return "subgraph";
    case GraphMode::Contour: return "contour";
    case GraphMode::All: return "all";
  }
  return "all";
}

std::string to_string(heat::KMode m) {
  switch (m) {
    case heat::KMode::Fixed: return "fixed";
    case heat::KMode::Learnable: return "learnable";
    case heat::KMode::FePredicted: return "fe";
  }
  return "fe";
}

void apply_override(PipelineConfig& c, const std::string& key, const std::string& value) {
  const std::string v = trim(value);
  if (key == "seed") {
    c.seed = static_cast<std::uint64_t>(std::stoull(v));
  } else if (key == "resolution") {
    c.resolution = to_int(key, v);
  } else if (key == "slice_interval_us") {
    c.slice_interval_us = to_int(key, v);
  } else if (key == "encoding") {
    if (v == "frame") c.encoding = events::Encoding::Frame;
    else if (v == "voxel") c.encoding = events::Encoding::Voxel;
    else bad(key, "expected frame|voxel");
  } else if (key == "voxel_bins") {
    c.voxel_bins = to_int(key, v);
  } else if (key == "patch_h") {
    c.patch_h = to_int(key, v);
  } else if (key == "patch_w") {
    c.patch_w = to_int(key, v);
  } else if (key == "dist_threshold") {
    c.dist_threshold = to_double(key, v);
  } else if (key == "node_threshold") {
    c.node_threshold = to_int(key, v);
  } else if (key == "knn_k") {
    c.knn_k = to_int(key, v);
  } else if (key == "graph_mode") {
    if (v == "none") c.graph_mode = GraphMode::None;
    else if (v == "global") c.graph_mode = GraphMode::Global;
    else if (v == "subgraph") c.graph_mode = GraphMode::Subgraph;
    else if (v == "contour") c.graph_mode = GraphMode::Contour;
    else if (v == "all") c.graph_mode = GraphMode::All;
    else bad(key, "expected none|global|subgraph|contour|all");
  } else if (key == "gcn_layers") {
    c.gcn_layers = to_int(key, v);
  } else if (key == "gcn_width") {
    c.gcn_width = to_int(key, v);
  } else if (key == "fe_dim") {
    c.fe_dim = to_int(key, v);
  } else if (key == "k_mode") {
    if (v == "fixed") c.k_mode = heat::KMode::Fixed;
    else if (v == "learnable") c.k_mode = heat::KMode::Learnable;
    else if (v == "fe") c.k_mode = heat::KMode::FePredicted;
    else bad(key, "expected fixed|learnable|fe");
  } else if (key == "k_fixed") {
    c.k_fixed = to_double(key, v);
  } else if (key == "stage_depths") {
    c.stage_depths = to_int4(key, v);
  } else if (key == "stage_widths") {
    c.stage_widths = to_int4(key, v);
  } else if (key == "num_classes") {
    c.num_classes = to_int(key, v);
  } else if (key == "queries") {
    c.queries = to_int(key, v);
  } else if (key == "lambda_cls") {
    c.lambda_cls = to_double(key, v);
  } else if (key == "lambda_l1") {
    c.lambda_l1 = to_double(key, v);
  } else if (key == "lambda_iou") {
    c.lambda_iou = to_double(key, v);
  } else if (key == "vfl_alpha") {
    c.vfl_alpha = to_double(key, v);
  } else if (key == "vfl_gamma") {
    c.vfl_gamma = to_double(key, v);
  } else if (key == "lr") {
    c.lr = to_double(key, v);
  } else if (key == "weight_decay") {
    c.weight_decay = to_double(key, v);
  } else if (key == "train_steps") {
    c.train_steps = to_int(key, v);
  } else if (key == "eval_every") {
    c.eval_every = to_int(key, v);
  } else if (key == "batch_size") {
    c.batch_size = to_int(key, v);
  } else if (key == "hflip_prob") {
    c.hflip_prob = to_double(key, v);
  } else {
    bad(key, "unknown configuration key");
  }
}

PipelineConfig parse_config(std::istream& in) {
  PipelineConfig cfg;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("config: line " + std::to_string(line_no) +
                                  ": expected key = value");
    apply_override(cfg, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  cfg.validate();
  return cfg;
}

PipelineConfig parse_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("config: cannot open " + path);
  return parse_config(in);
}

void PipelineConfig::validate() const {
  auto require = [](bool ok, const std::string& msg) {
    if (!ok) throw std::invalid_argument("config: " + msg);
  };
  require(resolution > 0 && resolution % 32 == 0, "resolution must be a positive multiple of 32");
  require(slice_interval_us > 0, "slice_interval_us must be positive");
  require(voxel_bins >= 1, "voxel_bins must be >= 1");
  require(patch_h > 0 && patch_w > 0, "patch size must be positive");
  require(resolution % patch_h == 0 && resolution % patch_w == 0,
          "resolution must be divisible by the patch size");
  require(dist_threshold > 0.0, "dist_threshold must be positive");
  require(node_threshold >= 1, "node_threshold must be >= 1");
  require(knn_k >= 1, "knn_k must be >= 1");
  require(gcn_layers >= 1, "gcn_layers must be >= 1");
  require(gcn_width >= 1, "gcn_width must be >= 1");
  require(fe_dim >= 1, "fe_dim must be >= 1");
  require(k_fixed >= 0.0, "k_fixed must be non-negative");
  for (int d : stage_depths) require(d >= 1, "stage_depths entries must be >= 1");
  for (int w : stage_widths) require(w >= 1, "stage_widths entries must be >= 1");
  require(num_classes >= 1, "num_classes must be >= 1");
  require(queries >= 1, "queries must be >= 1");
  require(queries <= final_tokens(),
          "queries must not exceed final-stage token count (resolution/32)^2");
  require(lambda_cls >= 0.0 && lambda_l1 >= 0.0 && lambda_iou >= 0.0,
          "loss weights must be non-negative");
  require(vfl_gamma >= 0.0 && vfl_alpha >= 0.0, "vfl constants must be non-negative");
  require(lr > 0.0, "lr must be positive");
  require(weight_decay >= 0.0, "weight_decay must be non-negative");
  require(train_steps >= 1, "train_steps must be >= 1");
  require(eval_every >= 1, "eval_every must be >= 1");
  require(batch_size >= 1, "batch_size must be >= 1");
  require(hflip_prob >= 0.0 && hflip_prob <= 1.0, "hflip_prob must be in [0,1]");
}

std::string serialize_config(const PipelineConfig& c) {
  std::ostringstream os;
  os << "seed = " << c.seed << "\n";
  os << "resolution = " << c.resolution << "\n";
  os << "slice_interval_us = " << c.slice_interval_us << "\n";
  os << "encoding = " << (c.encoding == events::Encoding::Frame ? "frame" : "voxel") << "\n";
  os << "voxel_bins = " << c.voxel_bins << "\n";
  os << "patch_h = " << c.patch_h << "\n";
  os << "patch_w = " << c.patch_w << "\n";
  os << "dist_threshold = " << fmt_double(c.dist_threshold) << "\n";
  os << "node_threshold = " << c.node_threshold << "\n";
  os << "knn_k = " << c.knn_k << "\n";
  os << "graph_mode = " << to_string(c.graph_mode) << "\n";
  os << "gcn_layers = " << c.gcn_layers << "\n";
  os << "gcn_width = " << c.gcn_width << "\n";
  os << "fe_dim = " << c.fe_dim << "\n";
  os << "k_mode = " << to_string(c.k_mode) << "\n";
  os << "k_fixed = " << fmt_double(c.k_fixed) << "\n";
  os << "stage_depths = " << c.stage_depths[0] << "," << c.stage_depths[1] << ","
     << c.stage_depths[2] << "," << c.stage_depths[3] << "\n";
  os << "stage_widths = " << c.stage_widths[0] << "," << c.stage_widths[1] << ","
     << c.stage_widths[2] << "," << c.stage_widths[3] << "\n";
  os << "num_classes = " << c.num_classes << "\n";
  os << "queries = " << c.queries << "\n";
  os << "lambda_cls = " << fmt_double(c.lambda_cls) << "\n";
  os << "lambda_l1 = " << fmt_double(c.lambda_l1) << "\n";
  os << "lambda_iou = " << fmt_double(c.lambda_iou) << "\n";
  os << "vfl_alpha = " << fmt_double(c.vfl_alpha) << "\n";
  os << "vfl_gamma = " << fmt_double(c.vfl_gamma) << "\n";
  os << "lr = " << fmt_double(c.lr) << "\n";
  os << "weight_decay = " << fmt_double(c.weight_decay) << "\n";
  os << "train_steps = " << c.train_steps << "\n";
  os << "eval_every = " << c.eval_every << "\n";
  os << "batch_size = " << c.batch_size << "\n";
  os << "hflip_prob = " << fmt_double(c.hflip_prob) << "\n";
  return os.str();
}

}  // namespace cvheat::pipe
