// cvheat: synthetic event generation, graph inspection, single-pass
// detection, training, evaluation and ablation sweeps over one config axis.
#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "cvheat/io.hpp"
#include "cvheat/model.hpp"
#include "cvheat/pipeline.hpp"
#include "cvheat/synthetic.hpp"
#include "cvheat/train.hpp"

using namespace cvheat;

namespace {

struct CommonArgs {
  std::string config_path;
  std::string out_dir = "out";
  std::vector<std::string> overrides;  // key=value
  bool seed_set = false;
  std::uint64_t seed = 0;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
  cmd->add_option("--config", args.config_path, "pipeline config file (key = value lines)");
  cmd->add_option("--out-dir", args.out_dir, "output directory");
  cmd->add_option("--seed", args.seed, "override the config seed")
      ->each([&args](const std::string&) { args.seed_set = true; });
  // every config key doubles as a flag, e.g. --resolution 128
  for (const std::string& key : pipe::config_keys()) {
    if (key == "seed") continue;
    cmd->add_option_function<std::string>(
           "--" + key,
           [&args, key](const std::string& v) { args.overrides.push_back(key + "=" + v); },
           "config key " + key)
        ->type_name("VALUE");
  }
}

pipe::PipelineConfig resolve_config(const CommonArgs& args) {
  pipe::PipelineConfig cfg;
  if (!args.config_path.empty()) cfg = pipe::parse_config_file(args.config_path);
  for (const std::string& kv : args.overrides) {
    const auto eq = kv.find('=');
    pipe::apply_override(cfg, kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (args.seed_set) cfg.seed = args.seed;
  cfg.validate();
  return cfg;
}

void ensure_dir(const std::string& dir) { std::filesystem::create_directories(dir); }

struct GenArgs {
  int scenes = 32;
  int slices_per_scene = 2;
  int min_objects = 1;
  int max_objects = 2;
};

// One multi-scene stream: scenes are concatenated back to back on the time
// axis so a single events.csv / gt.txt pair carries the whole dataset.
void run_gen(const CommonArgs& common, const GenArgs& gen) {
  const pipe::PipelineConfig cfg = resolve_config(common);
  ensure_dir(common.out_dir);
  std::mt19937_64 rng(cfg.seed);
  std::vector<events::Event> stream;
  std::vector<std::vector<det::GroundTruth>> gts;
  const std::int64_t scene_span = gen.slices_per_scene * cfg.slice_interval_us;
  for (int s = 0; s < gen.scenes; ++s) {
    const auto scene =
        synth::random_scene(cfg.resolution, gen.min_objects, gen.max_objects, scene_span, rng);
    const auto data = synth::generate_synthetic(scene, scene_span, cfg.slice_interval_us, rng());
    const std::int64_t base = static_cast<std::int64_t>(s) * scene_span;
    for (events::Event e : data.stream) {
      e.t += base;
      stream.push_back(e);
    }
    for (const auto& slice_gts : data.gts) gts.push_back(slice_gts);
  }
  io::write_events_csv(common.out_dir + "/events.csv", stream);
  io::write_ground_truth(common.out_dir + "/gt.txt", gts);
  std::ofstream cfg_out(common.out_dir + "/config.used");
  cfg_out << pipe::serialize_config(cfg);
  std::cout << "wrote " << stream.size() << " events over " << gts.size() << " slices to "
            << common.out_dir << std::endl;
}

std::vector<pipe::Sample> load_samples(const pipe::PipelineConfig& cfg,
                                       const std::string& events_path,
                                       const std::string& gt_path) {
  const auto stream = io::read_events_csv(events_path, cfg.resolution, cfg.resolution);
  if (gt_path.empty()) return pipe::prepare_samples(cfg, stream, nullptr);
  const auto slices = events::slice_stream(stream, cfg.slice_interval_us);
  const auto gts = io::group_ground_truth(io::read_ground_truth(gt_path), slices.size());
  return pipe::prepare_samples(cfg, stream, &gts);
}

void run_graph(const CommonArgs& common, const std::string& events_path, int slice_index) {
  const pipe::PipelineConfig cfg = resolve_config(common);
  ensure_dir(common.out_dir);
  const auto stream = io::read_events_csv(events_path, cfg.resolution, cfg.resolution);
  const auto slices = events::slice_stream(stream, cfg.slice_interval_us);
  if (slice_index < 0 || static_cast<std::size_t>(slice_index) >= slices.size())
    throw std::runtime_error("graph: slice index out of range (stream has " +
                             std::to_string(slices.size()) + " slices)");
  const auto frame = cfg.encoding == events::Encoding::Frame
                         ? events::encode_frame(slices[slice_index], cfg.resolution, cfg.resolution)
                         : events::encode_voxel(slices[slice_index], cfg.resolution,
                                                cfg.resolution, cfg.voxel_bins);
  graph::GraphConfig gc{cfg.patch_h, cfg.patch_w, cfg.dist_threshold, cfg.node_threshold,
                        cfg.knn_k};
  const auto bundle = graph::build_bundle(frame, gc);
  const std::string path = common.out_dir + "/bundle_slice" + std::to_string(slice_index) + ".txt";
  std::ofstream out(path);
  io::write_bundle_dump(out, bundle);
  std::cout << "global " << bundle.global.node_count() << " nodes / " << bundle.global.edge_count()
            << " edges; kept subgraphs " << bundle.subgraphs.size() << "; contour "
            << bundle.contour.node_count() << " nodes -> " << path << std::endl;
}

void run_forward(const CommonArgs& common, const std::string& events_path,
                 const std::string& gt_path, const std::string& ckpt, bool heatmaps) {
  const pipe::PipelineConfig cfg = resolve_config(common);
  ensure_dir(common.out_dir);
  const auto samples = load_samples(cfg, events_path, gt_path);
  pipe::Model model(cfg);
  if (!ckpt.empty()) io::load_checkpoint(ckpt, model.params());
  const auto art = pipe::run_pipeline(model, cfg, samples, common.out_dir, heatmaps);
  std::cout << "slices " << samples.size() << ", detections " << art.detections.size();
  if (art.has_metrics)
    std::cout << ", mAP@50:95 " << art.metrics.map << ", mAP@50 " << art.metrics.map50
              << ", mAP@75 " << art.metrics.map75;
  std::cout << std::endl;
}

void run_train(const CommonArgs& common, const std::string& train_events,
               const std::string& train_gt, const std::string& val_events,
               const std::string& val_gt, const std::string& init_ckpt) {
  const pipe::PipelineConfig cfg = resolve_config(common);
  ensure_dir(common.out_dir);
  const auto train_set = load_samples(cfg, train_events, train_gt);
  std::vector<pipe::Sample> val_set;
  if (!val_events.empty()) val_set = load_samples(cfg, val_events, val_gt);
  pipe::Model model(cfg);
  if (!init_ckpt.empty()) io::load_checkpoint(init_ckpt, model.params());
  pipe::TrainOptions opts;
  opts.out_dir = common.out_dir;
  opts.progress = &std::cout;
  const auto res = pipe::train(model, cfg, train_set, val_set, opts);
  io::save_checkpoint(common.out_dir + "/model.ckpt", model.params());
  std::ofstream cfg_out(common.out_dir + "/config.used");
  cfg_out << pipe::serialize_config(cfg);
  std::cout << "final loss " << res.losses.back();
  if (!res.val_curve.empty()) std::cout << ", final val mAP@50 " << res.final_map50;
  std::cout << ", checkpoint " << common.out_dir << "/model.ckpt" << std::endl;
}

void run_eval(const CommonArgs& common, const std::string& events_path, const std::string& gt_path,
              const std::string& ckpt) {
  const pipe::PipelineConfig cfg = resolve_config(common);
  ensure_dir(common.out_dir);
  const auto samples = load_samples(cfg, events_path, gt_path);
  pipe::Model model(cfg);
  if (!ckpt.empty()) io::load_checkpoint(ckpt, model.params());
  const auto art = pipe::run_pipeline(model, cfg, samples, common.out_dir, false);
  if (!art.has_metrics) throw std::runtime_error("eval: ground truth required");
  std::cout << "mAP@50:95 " << art.metrics.map << "  mAP@50 " << art.metrics.map50 << "  mAP@75 "
            << art.metrics.map75 << std::endl;
}

void run_ablate(const CommonArgs& common, const std::string& axis, const GenArgs& gen,
                int val_scenes) {
  const pipe::PipelineConfig base = resolve_config(common);
  ensure_dir(common.out_dir);
  std::vector<std::string> values;
  if (axis == "k_mode") values = {"fixed", "learnable", "fe"};
  else if (axis == "graph_mode") values = {"none", "global", "subgraph", "contour", "all"};
  else if (axis == "encoding") values = {"frame", "voxel"};
  else if (axis == "resolution") values = {"256", "448", "512", "640"};
  else if (axis == "stage_depths") values = {"2,2,6,2", "2,2,12,2", "2,2,18,2", "2,2,24,2"};
  else throw std::runtime_error(
      "ablate: axis must be one of k_mode|graph_mode|encoding|resolution|stage_depths");

  std::ofstream csv(common.out_dir + "/ablate_" + axis + ".csv");
  csv << axis << ",map50_95,map50,map75,train_seconds\n" << std::fixed << std::setprecision(6);
  for (const std::string& v : values) {
    pipe::PipelineConfig cfg = base;
    pipe::apply_override(cfg, axis, v);
    cfg.validate();
    // fresh synthetic data at this configuration
    std::mt19937_64 rng(cfg.seed);
    auto make_set = [&](int scenes, std::uint64_t salt) {
      std::mt19937_64 r(cfg.seed ^ salt);
      std::vector<pipe::Sample> out;
      for (int s = 0; s < scenes; ++s) {
        const std::int64_t span = gen.slices_per_scene * cfg.slice_interval_us;
        const auto scene =
            synth::random_scene(cfg.resolution, gen.min_objects, gen.max_objects, span, r);
        const auto data = synth::generate_synthetic(scene, span, cfg.slice_interval_us, r());
        auto samples = pipe::prepare_samples(cfg, data.stream, &data.gts);
        for (auto& smp : samples) out.push_back(std::move(smp));
      }
      return out;
    };
    const auto train_set = make_set(gen.scenes, 0x747261696eull);
    const auto val_set = make_set(val_scenes, 0x76616cull);
    pipe::Model model(cfg);
    pipe::TrainOptions opts;
    opts.progress = &std::cout;
    const auto t0 = std::chrono::steady_clock::now();
    pipe::train(model, cfg, train_set, val_set, opts);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const auto m = pipe::evaluate(model, val_set);
    csv << v << "," << m.map << "," << m.map50 << "," << m.map75 << "," << secs << "\n";
    std::cout << axis << "=" << v << " -> mAP@50 " << m.map50 << " (" << secs << "s)" << std::endl;
  }
  std::cout << "wrote " << common.out_dir << "/ablate_" << axis << ".csv" << std::endl;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"CvHeat event-based detection pipeline"};
  app.require_subcommand(1);

  CommonArgs gen_common, graph_common, fwd_common, train_common, eval_common, abl_common;
  GenArgs gen_args, abl_gen;

  auto* gen = app.add_subcommand("gen", "generate a synthetic event stream with ground truth");
  add_common(gen, gen_common);
  gen->add_option("--scenes", gen_args.scenes, "number of scenes");
  gen->add_option("--slices-per-scene", gen_args.slices_per_scene, "slices per scene");
  gen->add_option("--min-objects", gen_args.min_objects, "minimum objects per scene");
  gen->add_option("--max-objects", gen_args.max_objects, "maximum objects per scene");

  std::string graph_events;
  int graph_slice = 0;
  auto* graph_cmd = app.add_subcommand("graph", "dump the graph bundle for one slice");
  add_common(graph_cmd, graph_common);
  graph_cmd->add_option("--events", graph_events, "event CSV file")->required();
  graph_cmd->add_option("--slice", graph_slice, "slice index");

  std::string fwd_events, fwd_gt, fwd_ckpt;
  bool fwd_heatmaps = false;
  auto* fwd = app.add_subcommand("forward", "run the pipeline and write detections");
  add_common(fwd, fwd_common);
  fwd->add_option("--events", fwd_events, "event CSV file")->required();
  fwd->add_option("--gt", fwd_gt, "ground-truth file (enables metrics)");
  fwd->add_option("--checkpoint", fwd_ckpt, "checkpoint to load");
  fwd->add_flag("--heatmaps", fwd_heatmaps, "write per-stage heat-map bitmaps");

  std::string tr_events, tr_gt, tr_vev, tr_vgt, tr_init;
  auto* tr = app.add_subcommand("train", "train the detector");
  add_common(tr, train_common);
  tr->add_option("--train-events", tr_events, "training event CSV")->required();
  tr->add_option("--train-gt", tr_gt, "training ground truth")->required();
  tr->add_option("--val-events", tr_vev, "validation event CSV");
  tr->add_option("--val-gt", tr_vgt, "validation ground truth");
  tr->add_option("--init-checkpoint", tr_init, "warm-start checkpoint");

  std::string ev_events, ev_gt, ev_ckpt;
  auto* ev = app.add_subcommand("eval", "evaluate a checkpoint");
  add_common(ev, eval_common);
  ev->add_option("--events", ev_events, "event CSV file")->required();
  ev->add_option("--gt", ev_gt, "ground-truth file")->required();
  ev->add_option("--checkpoint", ev_ckpt, "checkpoint to load")->required();

  std::string abl_axis;
  int abl_val_scenes = 8;
  auto* abl = app.add_subcommand("ablate", "sweep one config axis on synthetic data");
  add_common(abl, abl_common);
  abl->add_option("--axis", abl_axis, "k_mode|graph_mode|encoding|resolution|stage_depths")
      ->required();
  abl->add_option("--scenes", abl_gen.scenes, "training scenes per value");
  abl->add_option("--slices-per-scene", abl_gen.slices_per_scene, "slices per scene");
  abl->add_option("--val-scenes", abl_val_scenes, "validation scenes per value");

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) run_gen(gen_common, gen_args);
    if (graph_cmd->parsed()) run_graph(graph_common, graph_events, graph_slice);
    if (fwd->parsed()) run_forward(fwd_common, fwd_events, fwd_gt, fwd_ckpt, fwd_heatmaps);
    if (tr->parsed()) run_train(train_common, tr_events, tr_gt, tr_vev, tr_vgt, tr_init);
    if (ev->parsed()) run_eval(eval_common, ev_events, ev_gt, ev_ckpt);
    if (abl->parsed()) run_ablate(abl_common, abl_axis, abl_gen, abl_val_scenes);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return 1;
  }
  return 0;
}
