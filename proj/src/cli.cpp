#include "saldrn/cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "saldrn/complexity.hpp"
#include "saldrn/errors.hpp"
#include "saldrn/image.hpp"
#include "saldrn/inference.hpp"
#include "saldrn/metrics.hpp"
#include "saldrn/synthetic.hpp"
#include "saldrn/trainer.hpp"

namespace saldrn {
namespace {

namespace fs = std::filesystem;

struct Options {
  std::string config_path;
  std::vector<std::string> overrides;
  std::string out_dir = "out";
  std::string checkpoint;
  std::string resume;
  std::vector<std::string> inputs;
  std::string scale;
  std::string scales = "2,3,4";
  std::string data;
  std::vector<std::string> thresholds;
};

/// defaults < file < SALDRN_SEED < --set
Config resolve_config(const Options& o, Config base = Config()) {
  if (!o.config_path.empty()) base.merge_file(o.config_path);
  if (const char* seed = std::getenv("SALDRN_SEED")) base.set("data.seed", seed);
  for (const auto& kv : o.overrides) base.apply(kv);
  return base;
}

bool architecture_key(const std::string& key) {
  return key.rfind("sal.", 0) == 0 || key.rfind("lsum.", 0) == 0 || key == "route.K" || key == "route.D" ||
         key == "route.C" || key == "route.share_params" || key == "route.fru_depths";
}

/// Checkpoint configuration with the user's runtime overrides on top.
std::unique_ptr<SrModel<float>> load_with_overrides(const Options& o, Config& cfg) {
  if (o.checkpoint.empty()) throw ConfigError("--checkpoint is required");
  Config stored;
  auto model = load_model(o.checkpoint, &stored);
  cfg = resolve_config(o, stored);
  for (const auto& key : Config::known_keys()) {
    if (architecture_key(key) && cfg.get(key) != stored.get(key)) {
      throw ConfigError("cannot change " + key + " of a trained checkpoint");
    }
  }
  model->set_thresholds(cfg.model().route.thresholds);
  return model;
}

double parse_scale(const std::string& text) {
  std::size_t used = 0;
  double r = 0;
  try {
    r = std::stod(text, &used);
  } catch (const std::exception&) {
    throw InvalidScale("scale '" + text + "' is not a number");
  }
  if (used != text.size()) throw InvalidScale("scale '" + text + "' is not a number");
  check_inference_scale(r);
  return r;
}

std::vector<double> parse_list(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    std::size_t used = 0;
    try {
      out.push_back(std::stod(item, &used));
    } catch (const std::exception&) {
      throw ConfigError("bad number '" + item + "' in '" + text + "'");
    }
    if (used != item.size()) throw ConfigError("bad number '" + item + "' in '" + text + "'");
  }
  return out;
}

void write_snapshot(const Config& cfg, const std::string& out_dir) {
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create " + out_dir + ": " + ec.message());
  const std::string path = out_dir + "/config.txt";
  std::ofstream os(path);
  os << cfg.snapshot();
  if (!os) throw IoError("cannot write " + path);
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream os(path);
  os << text;
  if (!os) throw IoError("cannot write " + path);
}

std::string percent(double v) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(0) << v * 100 << "%";
  return os.str();
}

int cmd_train(const Options& o, std::ostream& out) {
  Config cfg = resolve_config(o);
  if (!o.resume.empty()) cfg = resolve_config(o, checkpoint_config(load_checkpoint(o.resume)));
  cfg.train();
  cfg.model();
  cfg.loss();
  const DataConfig data = cfg.data();
  if (data.root.empty()) throw ConfigError("data.root is not set");
  write_snapshot(cfg, o.out_dir);
  const std::string last = train(cfg, o.out_dir, o.resume, [&](const StepMetrics& m) {
    if (m.step % 100 == 0 || m.step == 1) {
      out << "step " << m.step << " loss " << m.total << " sr " << m.sr << " diff " << m.diff << " sal " << m.sal
          << " beta_entropy " << m.beta_entropy << "\n";
    }
  });
  out << "checkpoint " << last << "\n";
  return 0;
}

int cmd_sr(const Options& o, std::ostream& out) {
  if (o.inputs.size() != 1) throw ConfigError("sr takes exactly one --input");
  if (o.scale.empty()) throw ConfigError("--scale is required");
  const double r = parse_scale(o.scale);
  Config cfg;
  auto model = load_with_overrides(o, cfg);
  const Tensor<float> img = read_image(o.inputs[0]);
  write_snapshot(cfg, o.out_dir);
  const SrResult res = super_resolve(*model, img, r, cfg.infer_tile());
  const std::string path = o.out_dir + "/" + sr_output_name(o.inputs[0], r);
  write_image(path, res.sr);
  out << path << " " << res.sr.h() << "x" << res.sr.w() << "\n";
  return 0;
}

int cmd_eval(const Options& o, std::ostream& out) {
  Config cfg;
  auto model = load_with_overrides(o, cfg);
  std::vector<double> scales = parse_list(o.scales);
  if (scales.empty()) throw ConfigError("--scales is empty");
  for (double r : scales) check_inference_scale(r);
  const std::string root = o.data.empty() ? cfg.get("data.root") : o.data;
  if (root.empty()) throw ConfigError("no dataset: pass --data or set data.root");
  const DatasetIndex index = load_dataset(root, Split::Test);
  write_snapshot(cfg, o.out_dir);
  const std::string csv = eval_csv(evaluate(*model, index, scales, cfg.infer_tile()));
  write_text(o.out_dir + "/eval.csv", csv);
  out << csv;
  return 0;
}

int cmd_profile(const Options& o, std::ostream& out) {
  Config cfg;
  std::unique_ptr<SrModel<float>> model;
  if (o.checkpoint.empty()) {
    cfg = resolve_config(o);
    model = std::make_unique<SrModel<float>>(cfg.model(), cfg.data().seed);
  } else {
    model = load_with_overrides(o, cfg);
  }
  const ModelConfig mc = cfg.model();
  const double r = o.scale.empty() ? 2.0 : parse_scale(o.scale);
  std::vector<std::vector<double>> settings;
  for (const auto& t : o.thresholds) {
    settings.push_back(parse_list(t));
    if (static_cast<int>(settings.back().size()) != mc.route.K) {
      throw ConfigError("--thresholds needs " + std::to_string(mc.route.K) + " values");
    }
  }
  if (settings.empty()) {
    if (mc.route.K != 3) throw ConfigError("the default sweep needs route.K = 3; pass --thresholds");
    settings = sweep_settings();
  }
  write_snapshot(cfg, o.out_dir);

  std::vector<double> means;
  if (o.inputs.empty()) {
    for (int i = 0; i < 4; ++i) {
      const auto rep = route_image(*model, synthetic_scene(256, 256, 7000 + i));
      means.insert(means.end(), rep.patch_saliency.begin(), rep.patch_saliency.end());
    }
  } else {
    for (const auto& in : o.inputs) {
      const auto rep = route_image(*model, read_image(in));
      means.insert(means.end(), rep.patch_saliency.begin(), rep.patch_saliency.end());
    }
  }

  const ComplexityReport params = count_params(mc);
  const std::vector<double> all(mc.route.K, 1.0);
  const double full = count_flops(mc, all, 48, r).total_flops();
  const auto rows = threshold_sweep(mc, means, settings, 48, r);

  nlohmann::json doc;
  doc["params"] = nlohmann::json::parse(params.to_json());
  doc["flops"] = nlohmann::json::parse(count_flops(mc, all, 48, r).to_json());
  doc["patch"] = 48;
  doc["scale"] = r;
  doc["patches_profiled"] = means.size();
  doc["sweep"] = nlohmann::json::array();
  out << "params total " << params.total_params() << "\n";
  for (const auto& row : rows) {
    doc["sweep"].push_back(
        {{"thresholds", row.thresholds}, {"passing_ratios", row.ratios}, {"flops", row.flops}, {"fraction", row.flops / full}});
    out << "thresholds " << format_list(row.thresholds) << " passing [";
    for (std::size_t k = 0; k < row.ratios.size(); ++k) out << (k ? ", " : "") << percent(row.ratios[k]);
    out << "] flops " << std::fixed << std::setprecision(1) << row.flops / 1e6 << "M (" << percent(row.flops / full)
        << ")\n"
        << std::defaultfloat;
  }
  write_text(o.out_dir + "/profile.json", doc.dump(2) + "\n");
  return 0;
}

int cmd_routing_map(const Options& o, std::ostream& out) {
  if (o.inputs.empty()) throw ConfigError("--input is required");
  Config cfg;
  auto model = load_with_overrides(o, cfg);
  if (!o.thresholds.empty()) {
    if (o.thresholds.size() != 1) throw ConfigError("routing-map takes one --thresholds setting");
    model->set_thresholds(parse_list(o.thresholds[0]));
  }
  const double r = o.scale.empty() ? 2.0 : parse_scale(o.scale);
  write_snapshot(cfg, o.out_dir);
  for (const auto& in : o.inputs) {
    Tensor<float> sal;
    const RoutingReport rep = route_image(*model, read_image(in), &sal);
    const std::string stem = fs::path(in).stem().string();
    export_maps(rep, sal, model->config(), o.out_dir, stem, r);
    out << stem << " patches " << rep.grid.size();
    for (double v : rep.passing_ratios) out << " " << percent(v);
    out << "\n";
  }
  return 0;
}

std::string one_line(std::string s) {
  for (char& c : s)
    if (c == '\n' || c == '\r') c = ' ';
  return s;
}

}  // namespace

std::string sr_output_name(const std::string& input, double r) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "_x%.2f.png", r);
  return fs::path(input).stem().string() + buf;
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Saliency-routed stepless super-resolution toolkit", "saldrn"};
  app.require_subcommand(1);
  Options o;

  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", o.config_path, "Key-value config file")->check(CLI::ExistingFile);
    sub->add_option("--set", o.overrides, "Override as key=value (repeatable)");
    sub->add_option("--out", o.out_dir, "Output directory");
  };
  auto* train_cmd = app.add_subcommand("train", "Train a model");
  common(train_cmd);
  train_cmd->add_option("--resume", o.resume, "Checkpoint to continue from")->check(CLI::ExistingFile);

  auto* sr_cmd = app.add_subcommand("sr", "Super-resolve one image");
  common(sr_cmd);
  sr_cmd->add_option("--input", o.inputs, "Input image")->required();
  sr_cmd->add_option("--scale", o.scale, "Scale factor in [1, 4]")->required();
  sr_cmd->add_option("--checkpoint", o.checkpoint, "Trained checkpoint")->required();

  auto* eval_cmd = app.add_subcommand("eval", "PSNR/SSIM on the test split");
  common(eval_cmd);
  eval_cmd->add_option("--checkpoint", o.checkpoint, "Trained checkpoint")->required();
  eval_cmd->add_option("--scales", o.scales, "Comma-separated scale factors");
  eval_cmd->add_option("--data", o.data, "Dataset root (default: data.root)");

  auto* profile_cmd = app.add_subcommand("profile", "Parameter and FLOPs report with a threshold sweep");
  common(profile_cmd);
  profile_cmd->add_option("--checkpoint", o.checkpoint, "Trained checkpoint (default: seeded model)");
  profile_cmd->add_option("--input", o.inputs, "Images used for passing ratios (default: synthetic scenes)");
  profile_cmd->add_option("--thresholds", o.thresholds, "Threshold setting a,b,c (repeatable)");
  profile_cmd->add_option("--scale", o.scale, "Scale for the FLOPs count (default 2)");

  auto* map_cmd = app.add_subcommand("routing-map", "Export saliency and path maps");
  common(map_cmd);
  map_cmd->add_option("--input", o.inputs, "Input images")->required();
  map_cmd->add_option("--checkpoint", o.checkpoint, "Trained checkpoint")->required();
  map_cmd->add_option("--thresholds", o.thresholds, "Threshold override a,b,c");
  map_cmd->add_option("--scale", o.scale, "Scale for the FLOPs estimate (default 2)");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: usage: " << one_line(e.what()) << "\n";
    return 1;
  }

  try {
    if (train_cmd->parsed()) return cmd_train(o, out);
    if (sr_cmd->parsed()) return cmd_sr(o, out);
    if (eval_cmd->parsed()) return cmd_eval(o, out);
    if (profile_cmd->parsed()) return cmd_profile(o, out);
    return cmd_routing_map(o, out);
  } catch (const Error& e) {
    err << "error: " << (e.user_error() ? "user" : "runtime") << ": " << one_line(e.what()) << "\n";
    return e.user_error() ? 1 : 2;
  } catch (const std::exception& e) {
    err << "error: runtime: " << one_line(e.what()) << "\n";
    return 2;
  }
}

}  // namespace saldrn
