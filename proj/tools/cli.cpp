#include "cli.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "uedge/bench.hpp"
#include "uedge/calibrate.hpp"
#include "uedge/datagen.hpp"
#include "uedge/image_io.hpp"
#include "uedge/metrics.hpp"
#include "uedge/model_io.hpp"
#include "uedge/planner.hpp"

namespace uedge::cli {

namespace {

using json = nlohmann::ordered_json;

// Every flag of every subcommand, bound before parsing.
struct Config {
  // synth
  std::string out_dir;
  std::string name = "synthetic";
  std::int64_t sources = 8;
  std::int64_t total = 0;
  double fraction = 0.75;
  std::int64_t size = 128;
  std::int64_t max_offset = 4;
  // shared
  std::uint64_t seed = 0;
  std::string spec = "6/64/Y/1.1";
  std::string weights;
  std::string out;
  unsigned threads = 0;
  bool quant = false;
  // quantize
  std::string calib;
  std::int64_t limit = 0;
  // infer
  std::string image;
  std::string out_mask;
  std::string out_prob;
  double threshold = 0.5;
  // bench
  std::string dataset;
  int reps = 10;
  // plan
  std::optional<double> ndtt, etpt, ctpt;
  std::string edge_report, cloud_report;
  std::vector<std::int64_t> plan_n{1, 10, 100, 1000, 10000};
  // metrics
  std::string cup, disc, ref_cup, ref_disc;
  std::string laterality;
  // params
  bool as_json = false;
};

class UsageError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

void emit(std::ostream& out, const json& j) { out << j.dump(2) << '\n'; }

ModelSpec spec_arg(const std::string& text) {
  // Accepts either a spec string or a preset name.
  if (text.find('/') == std::string::npos) return preset(text);
  return parse_spec(text);
}

std::vector<Tensor> load_images(const std::string& dir, const InputSize& size, std::int64_t limit) {
  auto paths = dataset_images(dir);
  if (limit > 0 && static_cast<std::int64_t>(paths.size()) > limit) paths.resize(static_cast<std::size_t>(limit));
  if (paths.empty()) throw Error(ErrorKind::io, "no .ppm images in '" + dir + "'");
  std::vector<Tensor> images;
  images.reserve(paths.size());
  for (const auto& p : paths) images.push_back(read_image(p, size));
  return images;
}

std::string dir_name(const std::string& dir) {
  std::filesystem::path p(dir);
  if (p.filename().empty()) p = p.parent_path();
  return p.filename().string();
}

void apply_threads(unsigned threads) {
  if (threads > 0) set_num_threads(threads);
}

void cmd_synth(const Config& c, std::ostream& out) {
  SynthOptions opt;
  opt.name = c.name;
  opt.sources = c.sources;
  opt.total = c.total;
  opt.train_fraction = c.fraction;
  opt.seed = c.seed;
  opt.size = {c.size, c.size, 3};
  opt.max_offset = c.max_offset;
  const DatasetManifest m = write_dataset(c.out_dir, opt);
  emit(out, {{"dataset", m.name},
             {"directory", c.out_dir},
             {"images_before_augmentation", m.source_count},
             {"images_after_augmentation", m.total_count},
             {"train", m.train_count},
             {"test", m.test_count},
             {"manifest", (std::filesystem::path(c.out_dir) / kManifestFile).string()}});
}

void cmd_init(const Config& c, std::ostream& out) {
  const ModelSpec spec = spec_arg(c.spec);
  const Graph graph = build_graph(spec);
  const WeightSet w = generate_random_weights(graph, c.seed);
  write_weights(c.out, w);
  const ParamCount pc = count_params(spec);
  emit(out, {{"spec", to_string(spec)},
             {"seed", c.seed},
             {"trainable_parameters", pc.total},
             {"mtp", pc.mtp},
             {"stored_scalars", w.scalar_count()},
             {"weights", c.out}});
}

void cmd_quantize(const Config& c, std::ostream& out) {
  apply_threads(c.threads);
  const LoadedWeights lw = read_weights(c.weights);
  if (lw.quantized()) throw UsageError("'" + c.weights + "' already holds quantized weights");
  const WeightSet& w = std::get<WeightSet>(lw.weights);
  const Graph graph = build_graph(lw.spec);
  w.check_against(graph);
  const auto images = load_images(c.calib, lw.spec.input, c.limit);
  const ActivationParams acts = calibrate(graph, w, images);
  QuantWeightSet q = quantize_weights(graph, w, acts);
  q.provenance = w.provenance + "; calibrated on " + dir_name(c.calib) + " (" +
                 std::to_string(images.size()) + " images)";
  write_weights(c.out, q);
  emit(out, {{"spec", q.spec},
             {"calibration_images", images.size()},
             {"activation_tensors", q.activations.size()},
             {"quantized_layers", q.layers.size()},
             {"provenance", q.provenance},
             {"weights", c.out}});
}

// A loaded model of either kind, ready to predict probabilities.
class Model {
 public:
  explicit Model(const std::string& path) : loaded_(read_weights(path)) {
    const Graph graph = build_graph(loaded_.spec);
    if (loaded_.quantized()) {
      quant_.emplace(graph, std::get<QuantWeightSet>(loaded_.weights));
    } else {
      const WeightSet& w = std::get<WeightSet>(loaded_.weights);
      w.check_against(graph);
      float_.emplace(graph, w);
    }
  }
  bool quantized() const { return loaded_.quantized(); }
  const ModelSpec& spec() const { return loaded_.spec; }
  Tensor predict(const Tensor& image) const { return quant_ ? quant_->run(image) : float_->run(image); }

 private:
  LoadedWeights loaded_;
  std::optional<FloatExecutor> float_;
  std::optional<QuantExecutor> quant_;
};

void check_backend(const Model& m, const Config& c) {
  if (c.quant && !m.quantized()) {
    throw UsageError("--quant needs a quantized weight file; '" + c.weights + "' holds float weights");
  }
  if (!c.quant && m.quantized()) {
    throw UsageError("'" + c.weights + "' holds quantized weights; pass --quant");
  }
}

void cmd_infer(const Config& c, std::ostream& out) {
  apply_threads(c.threads);
  const Model model(c.weights);
  check_backend(model, c);
  const Tensor image = read_image(c.image, model.spec().input);
  const Tensor prob = model.predict(image);
  const Mask mask = predict_mask(prob, static_cast<float>(c.threshold));
  write_mask(c.out_mask, mask);
  if (!c.out_prob.empty()) {
    std::vector<std::uint8_t> bytes;
    const std::string head = "P5\n" + std::to_string(mask.width) + " " + std::to_string(mask.height) + "\n255\n";
    bytes.assign(head.begin(), head.end());
    for (float p : prob.data()) bytes.push_back(static_cast<std::uint8_t>(std::lround(std::clamp(p, 0.0f, 1.0f) * 255.0f)));
    write_file(c.out_prob, bytes);
  }
  double mean = 0.0;
  for (float p : prob.data()) mean += p;
  mean /= static_cast<double>(prob.data().size());
  emit(out, {{"backend", model.quantized() ? "quant" : "float"},
             {"spec", to_string(model.spec())},
             {"image", c.image},
             {"mask", c.out_mask},
             {"threshold", c.threshold},
             {"foreground_pixels", mask.count()},
             {"mean_probability", mean}});
}

void cmd_bench(const Config& c, std::ostream& out) {
  set_num_threads(c.threads == 0 ? 1 : c.threads);
  const Model model(c.weights);
  check_backend(model, c);
  Dataset ds{dir_name(c.dataset), load_images(c.dataset, model.spec().input, c.limit)};
  const TimingReport r = time_dataset([&](const Tensor& img) { (void)model.predict(img); }, ds, c.reps,
                                      model.quantized() ? "quant" : "float");
  const json j = to_json(r);
  if (!c.out.empty()) {
    std::ofstream f(c.out);
    if (!f) throw Error(ErrorKind::io, "cannot write '" + c.out + "'");
    f << j.dump(2) << '\n';
  }
  emit(out, j);
}

TimingReport load_report(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::io, "cannot open '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::format, path + ": " + e.what());
  }
  return timing_report_from_json(j);
}

void cmd_plan(const Config& c, std::ostream& out) {
  const bool direct = c.etpt || c.ctpt;
  const bool reports = !c.edge_report.empty() || !c.cloud_report.empty();
  if (direct == reports) {
    throw UsageError("give either --etpt and --ctpt or --edge-report and --cloud-report");
  }
  if (!c.ndtt) throw UsageError("--ndtt is required");
  DeployInputs d;
  d.ndtt = *c.ndtt;
  json source;
  if (direct) {
    if (!c.etpt || !c.ctpt) throw UsageError("--etpt and --ctpt go together");
    d.etpt = *c.etpt;
    d.ctpt = *c.ctpt;
  } else {
    if (c.edge_report.empty() || c.cloud_report.empty()) {
      throw UsageError("--edge-report and --cloud-report go together");
    }
    const TimingReport edge = load_report(c.edge_report);
    const TimingReport cloud = load_report(c.cloud_report);
    d.etpt = edge.per_image_mean;
    d.ctpt = cloud.per_image_mean;
    source = {{"edge_report", c.edge_report}, {"cloud_report", c.cloud_report}};
  }
  const BreakEvenReport r = plan(d, c.plan_n);
  json j;
  j["ndtt"] = d.ndtt;
  j["etpt"] = d.etpt;
  j["ctpt"] = d.ctpt;
  if (!source.empty()) j["source"] = source;
  j["suctet_limit"] = r.asymptotic_speedup;
  j["break_even_n"] = r.break_even_n ? json(*r.break_even_n) : json(nullptr);
  j["regime"] = r.regime();
  auto& recs = j["recommendations"] = json::array();
  for (const Recommendation& rec : r.recommendations) {
    recs.push_back({{"n", rec.n},
                    {"edge_total", rec.edge_ms},
                    {"cloud_total", rec.cloud_ms},
                    {"target", to_string(rec.target)}});
  }
  emit(out, j);
}

void cmd_metrics(const Config& c, std::ostream& out) {
  const Mask cup = read_mask(c.cup);
  const Mask disc = read_mask(c.disc);
  if (cup.height != disc.height || cup.width != disc.width) throw_shape("cup and disc masks differ in size");
  const Laterality lat = parse_laterality(c.laterality);
  const double ratio = cdr(cup, disc);
  const RimProfile rim = rim_profile(cup, disc, lat);
  json j;
  j["cdr"] = ratio;
  j["cdr_class"] = to_string(classify_cdr(ratio));
  j["cup_vertical_diameter"] = vertical_diameter(cup);
  j["disc_vertical_diameter"] = vertical_diameter(disc);
  j["laterality"] = to_string(lat);
  j["rim"] = {{"inferior", rim.inferior},
              {"superior", rim.superior},
              {"nasal", rim.nasal},
              {"temporal", rim.temporal},
              {"violating_rays", rim.violating_rays},
              {"cup_pixels_outside_disc", rim.cup_pixels_outside_disc}};
  j["istn"] = istn_check(rim);
  if (!c.ref_cup.empty()) j["dice_cup"] = dice(cup, read_mask(c.ref_cup));
  if (!c.ref_disc.empty()) j["dice_disc"] = dice(disc, read_mask(c.ref_disc));
  emit(out, j);
}

void cmd_params(const Config& c, std::ostream& out) {
  const ModelSpec spec = spec_arg(c.spec);
  const Graph graph = build_graph(spec);
  const ParamCount pc = count_params(spec);
  if (c.as_json) {
    json layers = json::object();
    for (const Node& n : graph.nodes) {
      if (pc.per_layer.count(n.name)) layers[n.name] = pc.per_layer.at(n.name);
    }
    emit(out, {{"spec", to_string(spec)},
               {"widths", channel_widths(spec)},
               {"layers", layers},
               {"total", pc.total},
               {"mtp", pc.mtp}});
    return;
  }
  char line[128];
  out << "spec " << to_string(spec) << '\n';
  std::snprintf(line, sizeof line, "%-16s %8s %8s %12s\n", "layer", "c_in", "c_out", "params");
  out << line;
  for (const Node& n : graph.nodes) {
    const auto it = pc.per_layer.find(n.name);
    if (it == pc.per_layer.end()) continue;
    std::snprintf(line, sizeof line, "%-16s %8lld %8lld %12lld\n", n.name.c_str(),
                  static_cast<long long>(n.in_channels), static_cast<long long>(n.out_channels),
                  static_cast<long long>(it->second));
    out << line;
  }
  std::snprintf(line, sizeof line, "total %lld (%.2f MTP)\n", static_cast<long long>(pc.total), pc.mtp);
  out << line;
}

int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::numeric: return kNumeric;
    case ErrorKind::argument:
    case ErrorKind::spec:
    case ErrorKind::lookup: return kUsage;
    default: return kData;
  }
}

void report_error(std::ostream& err, std::string_view kind, std::string_view message,
                  std::string_view code = {}) {
  json j{{"error", kind}};
  if (!code.empty()) j["code"] = code;
  j["message"] = message;
  err << j.dump() << '\n';
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  Config c;
  CLI::App app{"U-Net int8 inference, quantization and benchmark toolkit", "uedge"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "uedge 0.1.0");

  auto* synth = app.add_subcommand("synth", "Generate a synthetic fundus dataset with masks and manifest");
  synth->add_option("--out", c.out_dir, "Output directory")->required();
  synth->add_option("--name", c.name, "Dataset name")->capture_default_str();
  synth->add_option("--sources", c.sources, "Source images before augmentation")
      ->check(CLI::Range(std::int64_t{1}, std::int64_t{1} << 20))
      ->capture_default_str();
  synth->add_option("--total", c.total, "Images after augmentation (0 = no augmentation)")
      ->check(CLI::NonNegativeNumber)
      ->capture_default_str();
  synth->add_option("--train-fraction", c.fraction, "Fraction of images assigned to training")
      ->check(CLI::Range(0.0, 1.0))
      ->capture_default_str();
  synth->add_option("--size", c.size, "Square image side, a multiple of 32")->capture_default_str();
  synth->add_option("--max-offset", c.max_offset, "Largest cup offset from the disc centre (px)")
      ->check(CLI::NonNegativeNumber)
      ->capture_default_str();
  synth->add_option("--seed", c.seed, "Random seed")->capture_default_str();

  auto* init = app.add_subcommand("init", "Write a random-weight float model");
  init->add_option("--spec", c.spec, "Model spec L/F/Y|N/IR or preset (disc, cup)")->capture_default_str();
  init->add_option("--seed", c.seed, "Random seed")->capture_default_str();
  init->add_option("--out", c.out, "Output weight file")->required();

  auto* quantize = app.add_subcommand("quantize", "Calibrate and quantize a float model to int8");
  quantize->add_option("--weights", c.weights, "Float weight file")->required();
  quantize->add_option("--calib", c.calib, "Directory of calibration images")->required();
  quantize->add_option("--out", c.out, "Output quantized weight file")->required();
  quantize->add_option("--limit", c.limit, "Use at most this many images (0 = all)")
      ->check(CLI::NonNegativeNumber)
      ->capture_default_str();
  quantize->add_option("--threads", c.threads, "Worker threads (0 = all cores)")->capture_default_str();

  auto* infer = app.add_subcommand("infer", "Predict a mask for one image");
  infer->add_option("--weights", c.weights, "Weight file")->required();
  infer->add_option("--image", c.image, "Input image (binary PPM)")->required();
  infer->add_option("--out-mask", c.out_mask, "Output mask (binary PGM)")->required();
  infer->add_option("--out-prob", c.out_prob, "Optional probability map (binary PGM)");
  infer->add_option("--threshold", c.threshold, "Mask threshold")->capture_default_str();
  infer->add_flag("--quant", c.quant, "Run the int8 path (needs a quantized weight file)");
  infer->add_option("--threads", c.threads, "Worker threads (0 = all cores)")->capture_default_str();

  auto* bench = app.add_subcommand("bench", "Time predictions over a dataset directory");
  bench->add_option("--weights", c.weights, "Weight file")->required();
  bench->add_option("--dataset", c.dataset, "Directory of images")->required();
  bench->add_option("--reps", c.reps, "Timed repetitions")->check(CLI::PositiveNumber)->capture_default_str();
  bench->add_option("--limit", c.limit, "Use at most this many images (0 = all)")
      ->check(CLI::NonNegativeNumber)
      ->capture_default_str();
  bench->add_flag("--quant", c.quant, "Run the int8 path (needs a quantized weight file)");
  bench->add_option("--threads", c.threads, "Worker threads for the timed loop")
      ->default_val(1)
      ->capture_default_str();
  bench->add_option("--out", c.out, "Also write the timing report to this file");

  auto* plan_cmd = app.add_subcommand("plan", "Cloud versus edge break-even analysis");
  plan_cmd->add_option("--ndtt", c.ndtt, "Network data transmission time (ms)");
  plan_cmd->add_option("--etpt", c.etpt, "Edge per-image prediction time (ms)");
  plan_cmd->add_option("--ctpt", c.ctpt, "Cloud per-image prediction time (ms)");
  plan_cmd->add_option("--edge-report", c.edge_report, "Timing report of the edge backend");
  plan_cmd->add_option("--cloud-report", c.cloud_report, "Timing report of the cloud backend");
  plan_cmd->add_option("--n", c.plan_n, "Dataset sizes to evaluate")->capture_default_str();

  auto* metrics = app.add_subcommand("metrics", "CDR, rim profile and ISTN report for cup/disc masks");
  metrics->add_option("--cup", c.cup, "Cup mask (binary PGM)")->required();
  metrics->add_option("--disc", c.disc, "Disc mask (binary PGM)")->required();
  metrics->add_option("--laterality", c.laterality, "Eye side; decides which horizontal sector is nasal")
      ->check(CLI::IsMember({"left", "right"}))
      ->required();
  metrics->add_option("--ref-cup", c.ref_cup, "Reference cup mask for Dice");
  metrics->add_option("--ref-disc", c.ref_disc, "Reference disc mask for Dice");

  auto* params = app.add_subcommand("params", "Trainable parameter count per layer");
  params->add_option("--spec", c.spec, "Model spec L/F/Y|N/IR or preset (disc, cup)")->capture_default_str();
  params->add_flag("--json", c.as_json, "Print JSON instead of a table");

  if (!args.empty() && !args.front().starts_with("-") && app.get_subcommand_no_throw(args.front()) == nullptr) {
    report_error(err, "usage_error", "unknown subcommand '" + args.front() + "'");
    return kUsage;
  }
  std::vector<std::string> argv_rev(args.rbegin(), args.rend());
  try {
    app.parse(argv_rev);
  } catch (const CLI::CallForHelp&) {
    const auto subs = app.get_subcommands();
    out << (subs.empty() ? app.help() : subs.front()->help(app.get_name()));
    return kOk;
  } catch (const CLI::CallForVersion&) {
    out << "uedge 0.1.0\n";
    return kOk;
  } catch (const CLI::ParseError& e) {
    report_error(err, "usage_error", e.what());
    return kUsage;
  }

  const std::string cmd = app.get_subcommands().front()->get_name();
  try {
    if (cmd == "synth") cmd_synth(c, out);
    else if (cmd == "init") cmd_init(c, out);
    else if (cmd == "quantize") cmd_quantize(c, out);
    else if (cmd == "infer") cmd_infer(c, out);
    else if (cmd == "bench") cmd_bench(c, out);
    else if (cmd == "plan") cmd_plan(c, out);
    else if (cmd == "metrics") cmd_metrics(c, out);
    else if (cmd == "params") cmd_params(c, out);
    return kOk;
  } catch (const UsageError& e) {
    report_error(err, "usage_error", e.what());
    return kUsage;
  } catch (const FormatError& e) {
    report_error(err, to_string(e.kind()), e.what(), to_string(e.code()));
    return kData;
  } catch (const Error& e) {
    report_error(err, to_string(e.kind()), e.what());
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    report_error(err, "internal_error", e.what());
    return kData;
  }
}

}  // namespace uedge::cli
