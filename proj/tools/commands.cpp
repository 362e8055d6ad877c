// Copyright 2026 The S2CP Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "commands.hpp"

#include <cblas.h>

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <set>

#include "s2cp/errors.hpp"
#include "s2cp/spectral.hpp"

namespace s2cp::cli {

namespace fs = std::filesystem;

namespace {

constexpr char kTrainDomainsRecord[] = "meta.train_domains";

std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

void make_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write " + path.string());
  return f;
}

std::string dataset_name(const fs::path& manifest) {
  const auto parent = manifest.parent_path().filename().string();
  return parent.empty() ? manifest.stem().string() : parent;
}

std::vector<Sample> load_split(const DatasetManifest& m, const std::string& split) {
  return load_samples(m, split == "all" ? "" : split);
}

GrayImage channel_mean_heatmap(const Tensor& t, std::size_t sample) {
  const Shape s = t.shape();
  GrayImage img(s.h, s.w);
  for (std::size_t c = 0; c < s.c; ++c) {
    const auto plane = t.values().subspan((sample * s.c + c) * s.plane(), s.plane());
    for (std::size_t i = 0; i < s.plane(); ++i) img.pixels[i] += plane[i] / float(s.c);
  }
  const auto [lo, hi] = std::minmax_element(img.pixels.begin(), img.pixels.end());
  const float a = *lo, range = *hi - *lo;
  for (auto& v : img.pixels) v = range > 0 ? (v - a) / range : 0.0f;
  return img;
}

}  // namespace

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const ProtocolError*>(&e)) return kExitProtocol;
  if (dynamic_cast<const IoError*>(&e)) return kExitIo;
  if (dynamic_cast<const Error*>(&e)) return kExitConfig;
  return 1;
}

void apply_thread_limit() {
  const char* env = std::getenv("S2CP_THREADS");
  if (env == nullptr || *env == '\0') return;
  char* end = nullptr;
  const long n = std::strtol(env, &end, 10);
  if (*end != '\0' || n < 1) throw ConfigError(std::string("S2CP_THREADS: '") + env + "' is not a positive integer");
  openblas_set_num_threads(static_cast<int>(n));
}

DomainStyle style_for(const RunConfig& cfg, int id) {
  if (id < 0) throw ConfigError("gen_domains: domain ids must be non-negative");
  const auto presets = default_domain_presets();
  const auto overrides = cfg.style_overrides(id);
  std::size_t base = static_cast<std::size_t>(id) % presets.size();
  const std::string prefix = "style." + std::to_string(id) + ".";
  if (auto it = overrides.find("base"); it != overrides.end()) {
    RunConfig probe;
    probe.set(prefix + "base", it->second);
    base = probe.get_size(prefix + "base");
    if (base >= presets.size()) throw ConfigError(prefix + "base: no preset " + it->second);
  }
  DomainStyle s = presets[base];
  s.domain_id = id;
  for (const auto& [field, value] : overrides) {
    if (field == "base") continue;
    RunConfig probe;
    probe.set(prefix + field, value);
    const double v = probe.get_double(prefix + field);
    if (field == "beta") s.beta = v;
    else if (field == "mean") s.mean = v;
    else if (field == "spread") s.spread = v;
    else if (field == "clutter_density") s.clutter_density = v;
    else if (field == "clutter_scale") s.clutter_scale = v;
    else if (field == "noise_sigma") s.noise_sigma = v;
    else if (field == "phase_jitter") s.phase_jitter = v;
  }
  try {
    s.validate();
  } catch (const ConfigError& e) {
    throw ConfigError(prefix + e.what());
  }
  return s;
}

SceneSpec scene_spec_for(const RunConfig& cfg) {
  SceneSpec s;
  s.size = cfg.get_size("size");
  s.min_targets = cfg.get_size("min_targets");
  s.max_targets = cfg.get_size("max_targets");
  s.min_diameter = cfg.get_double("min_diameter");
  s.max_diameter = cfg.get_double("max_diameter");
  s.min_scr = cfg.get_double("min_scr");
  s.max_scr = cfg.get_double("max_scr");
  s.validate();
  return s;
}

ModelConfig model_config_for(const RunConfig& cfg, std::size_t source_domains, std::size_t height,
                             std::size_t width, std::ostream& log) {
  ModelConfig m;
  m.stages = cfg.get_size("stages");
  m.base_channels = cfg.get_size("base_channels");
  m.height = height;
  m.width = width;
  m.prm = cfg.get_bool("prm");
  m.oam = cfg.get_bool("oam");
  m.ssr = cfg.get_bool("ssr");
  m.ssr_stages = cfg.get_sizes("ssr_stages");
  m.tau = cfg.get_double("tau");
  m.lambda = cfg.get_double("lambda");
  m.alpha = cfg.get_double("alpha");
  m.seed = static_cast<std::uint64_t>(cfg.get_int("seed"));
  const auto& ranking = cfg.get("ranking");
  if (ranking == "sigma") m.ranking = StyleRanking::kSigma;
  else if (ranking == "mu") m.ranking = StyleRanking::kMu;
  else throw ConfigError("ranking: '" + ranking + "' is not sigma or mu");
  const auto& up = cfg.get("upsample");
  if (up == "bilinear") m.upsample = Upsample::kBilinear;
  else if (up == "nearest") m.upsample = Upsample::kNearest;
  else throw ConfigError("upsample: '" + up + "' is not bilinear or nearest");
  if (m.ssr && source_domains < 2) {
    log << "note: " << source_domains << " source domain(s); SSR disabled\n";
    m.ssr = false;
  }
  m.domains = std::max<std::size_t>(source_domains, 1);
  m.validate();
  return m;
}

std::vector<DatasetManifest> cmd_gen_data(const RunConfig& cfg, std::ostream& log) {
  const auto spec = scene_spec_for(cfg);
  const auto ids = cfg.get_sizes("gen_domains");
  if (ids.empty()) throw ConfigError("gen_domains: at least one domain is required");
  const std::size_t n = cfg.get_size("gen_n");
  if (n == 0) throw ConfigError("gen_n: must be at least 1");
  std::vector<DomainStyle> styles;
  for (auto id : ids) styles.push_back(style_for(cfg, static_cast<int>(id)));
  const fs::path dir = cfg.get("data_dir");
  const auto seed = static_cast<std::uint64_t>(cfg.get_int("gen_seed"));
  make_dir(dir);
  std::vector<DatasetManifest> out;
  for (const auto& s : styles) {
    out.push_back(generate_domain_dataset(s, spec, n, seed, dir));
    log << "domain " << s.domain_id << ": " << n << " samples -> " << (out.back().root / "manifest.tsv").string()
        << "\n";
  }
  cfg.write_resolved(dir / "gen_config.txt");
  return out;
}

TrainResult cmd_train(const RunConfig& cfg, std::ostream& log) {
  const auto paths = cfg.get_list("manifests");
  if (paths.empty()) throw ConfigError("manifests: at least one training manifest is required");
  std::vector<Sample> train, val;
  for (const auto& p : paths) {
    const auto m = read_manifest(p);
    auto t = load_samples(m, "train"), v = load_samples(m, "val");
    train.insert(train.end(), t.begin(), t.end());
    val.insert(val.end(), v.begin(), v.end());
  }
  if (train.empty()) throw ConfigError("manifests: no training samples");
  if (val.empty()) throw ConfigError("manifests: no validation samples");
  const auto domains = source_domains(train);
  const auto mc = model_config_for(cfg, domains.size(), train[0].image.height, train[0].image.width, log);

  const fs::path out = cfg.get("out_dir");
  make_dir(out);
  cfg.write_resolved(out / "resolved_config.txt");

  TrainOptions o;
  o.epochs = cfg.get_size("epochs");
  o.lr = cfg.get_double("lr");
  o.batch = cfg.get_size("batch");
  o.seed = static_cast<std::uint64_t>(cfg.get_int("seed"));
  o.threshold = cfg.get_double("threshold");
  o.match_radius = cfg.get_double("match_radius");
  o.out_dir = out;
  o.resume = cfg.get_bool("resume");
  CheckpointRecord meta{kTrainDomainsRecord, {std::uint32_t(domains.size())}, {}};
  for (int d : domains) meta.values.push_back(float(d));
  o.extra_records.push_back(meta);
  o.on_epoch = [&log, &o](const EpochLog& r) {
    log << "epoch " << r.epoch << "/" << o.epochs << " loss " << num(r.loss) << " val_iou " << num(r.val_iou)
        << " val_pd " << num(r.val_pd) << " val_fa " << num(r.val_fa) << "\n";
    log.flush();
  };

  log << "training on " << train.size() << " samples from " << domains.size() << " domain(s), validating on "
      << val.size() << "\n";
  S2cpModel model(mc);
  auto result = train_loop(model, train, val, o);
  log << "best val IoU " << num(result.best_val_iou) << " at epoch " << result.best_epoch << "\n";
  return result;
}

EvalOutcome run_eval(const Predictor& predict, std::span<const Sample> samples, const std::string& dataset,
                     const RunConfig& cfg, const fs::path& out_dir) {
  const double threshold = cfg.get_double("threshold");
  const double radius = cfg.get_double("match_radius");
  if (!(threshold >= 0.0 && threshold <= 1.0)) throw ConfigError("threshold: must lie in [0, 1]");
  const auto roc_thresholds = cfg.get_doubles("roc_thresholds");

  const auto probs = predict(samples);
  if (probs.size() != samples.size()) throw ShapeError("predictor returned the wrong number of maps");
  std::vector<BinaryMask> preds, gts;
  std::map<int, std::vector<std::size_t>> by_domain;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    preds.push_back(threshold_map(probs[i], threshold));
    gts.push_back(samples[i].mask);
    by_domain[samples[i].domain].push_back(i);
  }

  EvalOutcome out;
  out.rows.push_back({dataset, "all", samples.size(), evaluate(preds, gts, radius)});
  if (by_domain.size() > 1) {
    for (const auto& [d, idx] : by_domain) {
      std::vector<BinaryMask> p, g;
      for (auto i : idx) {
        p.push_back(preds[i]);
        g.push_back(gts[i]);
      }
      out.rows.push_back({dataset, std::to_string(d), idx.size(), evaluate(p, g, radius)});
    }
  }
  out.roc = roc_sweep(probs, gts, roc_thresholds, radius);

  make_dir(out_dir);
  auto report = open_out(out_dir / "eval_report.csv");
  report << "dataset,domain,images,iou,f1,pd,fa_e6,tp,fp,fn,detected,targets\n";
  for (const auto& r : out.rows) {
    const auto& px = r.report.pixel;
    const auto& tg = r.report.target;
    report << r.dataset << ',' << r.domain << ',' << r.images << ',' << num(px.iou) << ',' << num(px.f1) << ','
           << num(tg.pd) << ',' << num(tg.fa * 1e6) << ',' << px.counts.tp << ',' << px.counts.fp << ','
           << px.counts.fn << ',' << tg.counts.detected << ',' << tg.counts.targets << '\n';
  }
  auto roc = open_out(out_dir / "roc.csv");
  roc << "threshold,pd,fa_e6\n";
  for (const auto& p : out.roc) roc << num(p.threshold) << ',' << num(p.pd) << ',' << num(p.fa * 1e6) << '\n';
  if (!report || !roc) throw IoError("failed writing evaluation CSVs in " + out_dir.string());
  return out;
}

EvalOutcome cmd_eval(const RunConfig& cfg, std::ostream& log) {
  const std::string target = cfg.get("target_manifest");
  if (target.empty()) throw ConfigError("target_manifest: required for eval");
  const fs::path out = cfg.get("out_dir");
  fs::path ckpt = cfg.get("checkpoint");
  if (ckpt.empty()) ckpt = out / "best.ckpt";
  if (!fs::exists(ckpt)) throw IoError("checkpoint " + ckpt.string() + " does not exist");
  const auto records = load_checkpoint(ckpt);

  const auto manifest = read_manifest(target);
  const auto samples = load_split(manifest, cfg.get("eval_split"));
  if (samples.empty()) throw ConfigError("target_manifest: no samples in split '" + cfg.get("eval_split") + "'");

  std::vector<int> trained;
  bool have_meta = false;
  for (const auto& r : records) {
    if (r.name != kTrainDomainsRecord) continue;
    have_meta = true;
    for (float v : r.values) trained.push_back(static_cast<int>(v));
  }
  const bool allow_same = cfg.get_bool("allow_same_domain");
  if (!allow_same) {
    if (!have_meta) throw ProtocolError("checkpoint records no training domains; set allow_same_domain=true");
    for (const auto& s : samples) {
      if (std::find(trained.begin(), trained.end(), s.domain) != trained.end())
        throw ProtocolError("target domain " + std::to_string(s.domain) +
                            " was a training domain; set allow_same_domain=true for a same-domain evaluation");
    }
  }

  auto mc = model_config_for(cfg, have_meta ? trained.size() : 2, samples[0].image.height, samples[0].image.width,
                             log);
  S2cpModel model(mc);
  model.load_records(records);
  const std::size_t batch = cfg.get_size("batch");
  Predictor predict = [&](std::span<const Sample> s) { return predict_probabilities(model, s, batch); };

  make_dir(out);
  cfg.write_resolved(out / "eval_config.txt");
  auto outcome = run_eval(predict, samples, dataset_name(target), cfg, out);
  for (const auto& r : outcome.rows) {
    log << r.dataset << " domain " << r.domain << ": IoU " << num(r.report.pixel.iou) << " F1 "
        << num(r.report.pixel.f1) << " Pd " << num(r.report.target.pd) << " Fa(1e-6) "
        << num(r.report.target.fa * 1e6) << "\n";
  }

  if (cfg.get_bool("dump_activations")) {
    const fs::path dir = out / "activations";
    make_dir(dir);
    for (std::size_t i = 0; i < samples.size(); ++i) {
      std::vector<std::size_t> one{i};
      const auto x = make_batch(samples, one, 0, 1).first;
      const auto trace = forward_trace(x, model, Mode::kEval);
      for (std::size_t l = 0; l < trace.decoded.size(); ++l) {
        char name[48];
        std::snprintf(name, sizeof name, "%04zu_stage%zu.pgm", i, l + 1);
        save_pgm(channel_mean_heatmap(trace.decoded[l], 0), dir / name, 8);
      }
    }
    log << "activation maps in " << dir.string() << "\n";
  }
  return outcome;
}

SpectraOutcome cmd_spectra(const RunConfig& cfg, std::ostream& log) {
  const auto paths = cfg.get_list("manifests");
  if (paths.empty()) throw ConfigError("manifests: at least one manifest is required");
  const fs::path out = cfg.get("out_dir");
  SpectraOutcome result;
  std::vector<std::string> names;
  for (const auto& p : paths) {
    const auto m = read_manifest(p);
    if (m.entries.empty()) throw ConfigError("manifests: " + p + " has no entries");
    std::vector<GrayImage> images;
    for (auto& s : load_samples(m, "")) images.push_back(std::move(s.image));
    result.profiles.push_back(dataset_spectrum_profile(images));
    names.push_back(dataset_name(p));
  }
  make_dir(out);
  cfg.write_resolved(out / "spectra_config.txt");
  for (std::size_t i = 0; i < result.profiles.size(); ++i) {
    const auto& pr = result.profiles[i];
    auto f = open_out(out / ("spectrum_" + std::to_string(i) + ".csv"));
    f << "bin_radius,mean_log_magnitude,phase_congruency,population\n";
    for (std::size_t b = 0; b < pr.radial_magnitude.size(); ++b)
      f << b << ',' << num(pr.radial_magnitude[b]) << ',' << num(pr.phase_congruency[b]) << ','
        << pr.bin_population[b] << '\n';
  }
  auto d = open_out(out / "divergence.csv");
  d << "index_a,index_b,dataset_a,dataset_b,magnitude,congruency\n";
  for (std::size_t i = 0; i < result.profiles.size(); ++i) {
    for (std::size_t j = i + 1; j < result.profiles.size(); ++j) {
      const auto div = profile_divergence(result.profiles[i], result.profiles[j]);
      result.pairs.emplace_back(i, j, div);
      d << i << ',' << j << ',' << names[i] << ',' << names[j] << ',' << num(div.magnitude) << ','
        << num(div.congruency) << '\n';
      log << names[i] << " vs " << names[j] << ": magnitude " << num(div.magnitude) << " congruency "
          << num(div.congruency) << "\n";
    }
  }
  return result;
}

int run_command(const std::string& command, const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  try {
    apply_thread_limit();
    if (command == "gen-data") cmd_gen_data(cfg, out);
    else if (command == "train") cmd_train(cfg, out);
    else if (command == "eval") cmd_eval(cfg, out);
    else if (command == "spectra") cmd_spectra(cfg, out);
    else throw ConfigError("unknown command '" + command + "'");
    return kExitOk;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return exit_code_for(e);
  }
}

}  // namespace s2cp::cli
