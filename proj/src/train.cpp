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

#include "s2cp/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include "s2cp/errors.hpp"

namespace s2cp {

namespace {

constexpr char kLogHeader[] = "epoch,step,loss,val_iou,val_pd,val_fa";

CheckpointRecord scalar_record(const std::string& name, double v) {
  return {name, {1}, {static_cast<float>(v)}};
}

// Style prototypes are kept in double precision; the training state stores
// each value as three 22-bit chunks so a resumed run continues bit for bit.
std::string exact_prefix(std::size_t stage, int domain) {
  return "exact.ssr.stage" + std::to_string(stage) + ".domain" + std::to_string(domain);
}

CheckpointRecord exact_record(const std::string& name, const std::vector<double>& values) {
  CheckpointRecord r{name, {std::uint32_t(values.size()), 3}, {}};
  for (double v : values) {
    std::uint64_t b;
    std::memcpy(&b, &v, sizeof b);
    r.values.push_back(float(b & 0x3fffff));
    r.values.push_back(float((b >> 22) & 0x3fffff));
    r.values.push_back(float(b >> 44));
  }
  return r;
}

std::vector<double> exact_values(const CheckpointRecord& r) {
  std::vector<double> out;
  for (std::size_t i = 0; i + 2 < r.values.size(); i += 3) {
    const std::uint64_t b = std::uint64_t(r.values[i]) | std::uint64_t(r.values[i + 1]) << 22 |
                            std::uint64_t(r.values[i + 2]) << 44;
    double v;
    std::memcpy(&v, &b, sizeof v);
    out.push_back(v);
  }
  return out;
}

std::vector<CheckpointRecord> state_records(const S2cpModel& model) {
  auto records = model.to_records();
  for (const auto& [stage, site] : model.ssr) {
    for (const auto& proto : site.prototypes) {
      if (!proto.initialized) continue;
      const auto p = exact_prefix(stage, proto.domain_id);
      records.push_back(exact_record(p + ".mu", proto.mu));
      records.push_back(exact_record(p + ".sigma", proto.sigma));
      records.push_back(scalar_record(p + ".count", double(proto.update_count)));
    }
  }
  return records;
}

void restore_state(S2cpModel& model, const std::vector<CheckpointRecord>& records) {
  model.load_records(records);
  std::map<std::string, const CheckpointRecord*> by_name;
  for (const auto& r : records) by_name[r.name] = &r;
  for (auto& [stage, site] : model.ssr) {
    for (auto& proto : site.prototypes) {
      const auto p = exact_prefix(stage, proto.domain_id);
      const auto mu = by_name.find(p + ".mu"), sigma = by_name.find(p + ".sigma"), count = by_name.find(p + ".count");
      if (mu == by_name.end() || sigma == by_name.end() || count == by_name.end()) continue;
      proto.mu = exact_values(*mu->second);
      proto.sigma = exact_values(*sigma->second);
      proto.update_count = static_cast<std::uint64_t>(count->second->values.at(0));
      proto.initialized = true;
    }
  }
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

}  // namespace

std::vector<int> source_domains(std::span<const Sample> samples) {
  std::vector<int> ids;
  for (const auto& s : samples) ids.push_back(s.domain);
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  return ids;
}

std::pair<Tensor, Tensor> make_batch(std::span<const Sample> samples, std::span<const std::size_t> order,
                                     std::size_t first, std::size_t count) {
  if (count == 0 || first + count > order.size()) throw ValueError("batch range out of bounds");
  const auto& ref = samples[order[first]].image;
  const Shape shape{count, 1, ref.height, ref.width};
  std::vector<float> x(shape.numel()), y(shape.numel());
  for (std::size_t k = 0; k < count; ++k) {
    const auto& s = samples[order[first + k]];
    if (s.image.height != ref.height || s.image.width != ref.width || s.mask.height != ref.height ||
        s.mask.width != ref.width)
      throw ShapeError("samples in a batch must share one size");
    std::copy(s.image.pixels.begin(), s.image.pixels.end(), x.begin() + k * shape.plane());
    for (std::size_t i = 0; i < shape.plane(); ++i) y[k * shape.plane() + i] = s.mask.bits[i] ? 1.0f : 0.0f;
  }
  return {Tensor::from(shape, std::move(x)), Tensor::from(shape, std::move(y))};
}

std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, std::size_t epoch) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(epoch)};
  std::mt19937_64 rng(seq);
  std::shuffle(order.begin(), order.end(), rng);
  return order;
}

std::vector<GrayImage> predict_probabilities(S2cpModel& model, std::span<const Sample> samples, std::size_t batch) {
  if (batch == 0) throw ValueError("batch must be positive");
  std::vector<std::size_t> order(samples.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<GrayImage> out;
  for (std::size_t first = 0; first < samples.size(); first += batch) {
    const std::size_t count = std::min(batch, samples.size() - first);
    const auto x = make_batch(samples, order, first, count).first;
    const auto p = forward(x, model, Mode::kEval);
    const Shape s = p.shape();
    for (std::size_t n = 0; n < s.n; ++n) {
      GrayImage img(s.h, s.w);
      const auto v = p.values().subspan(n * s.plane(), s.plane());
      std::copy(v.begin(), v.end(), img.pixels.begin());
      out.push_back(std::move(img));
    }
  }
  return out;
}

EvalReport evaluate_model(S2cpModel& model, std::span<const Sample> samples, double threshold, double radius,
                          std::size_t batch) {
  if (!(threshold >= 0.0 && threshold <= 1.0)) throw ValueError("threshold must lie in [0, 1]");
  const auto probs = predict_probabilities(model, samples, batch);
  std::vector<BinaryMask> preds, gts;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    preds.push_back(threshold_map(probs[i], threshold));
    gts.push_back(samples[i].mask);
  }
  return evaluate(preds, gts, radius);
}

TrainResult train_loop(S2cpModel& model, std::span<const Sample> train, std::span<const Sample> val,
                       const TrainOptions& options) {
  if (train.empty()) throw ValueError("training set is empty");
  if (val.empty()) throw ValueError("validation set is empty");
  if (options.batch == 0 || options.batch > train.size())
    throw ValueError("batch " + std::to_string(options.batch) + " does not fit a training set of " +
                     std::to_string(train.size()));
  if (!(options.lr >= 0.0)) throw ValueError("learning rate must be non-negative");

  const auto domains = source_domains(train);
  const auto& cfg = model.config();
  if (cfg.ssr && domains.size() != cfg.domains)
    throw ConfigError("model expects " + std::to_string(cfg.domains) + " source domains, training set has " +
                      std::to_string(domains.size()));
  std::vector<int> proto_index(train.size());
  for (std::size_t i = 0; i < train.size(); ++i)
    proto_index[i] = static_cast<int>(std::lower_bound(domains.begin(), domains.end(), train[i].domain) -
                                      domains.begin());

  TrainResult result;
  AdamState adam;
  adam.lr = options.lr;
  std::size_t step = 0, first_epoch = 1;
  float best = -1.0f;

  const bool files = !options.out_dir.empty();
  const auto state_path = options.out_dir / "state.ckpt";
  const auto log_path = options.out_dir / "train_log.csv";
  if (files) {
    std::error_code ec;
    std::filesystem::create_directories(options.out_dir, ec);
    if (ec) throw IoError("cannot create " + options.out_dir.string() + ": " + ec.message());
  }
  if (files && options.resume && std::filesystem::exists(state_path)) {
    auto st = load_train_state(state_path);
    restore_state(model, st.model);
    adam = std::move(st.adam);
    adam.lr = options.lr;
    step = st.step;
    first_epoch = st.epoch + 1;
    best = st.best_val_iou;
    result.best_val_iou = best;
    result.best_epoch = st.best_epoch;
    for (const auto& row : read_train_log(log_path))
      if (row.epoch <= st.epoch) result.log.push_back(row);
  }

  for (std::size_t epoch = first_epoch; epoch <= options.epochs; ++epoch) {
    const auto order = epoch_order(train.size(), options.seed, epoch);
    double loss_sum = 0.0;
    std::size_t steps = 0;
    for (std::size_t first = 0; first < order.size(); first += options.batch) {
      const std::size_t count = std::min(options.batch, order.size() - first);
      auto [x, y] = make_batch(train, order, first, count);
      std::vector<int> ids(count);
      for (std::size_t k = 0; k < count; ++k) ids[k] = proto_index[order[first + k]];
      ForwardOptions fo;
      fo.domains = ids;

      model.zero_grad();
      const auto p = forward(x, model, Mode::kTrain, fo);
      const auto loss = soft_iou_loss(p, y);
      const double lv = loss.item();
      if (!std::isfinite(lv)) throw ValueError("non-finite training loss at step " + std::to_string(step + 1));
      loss.backward();
      auto params = model.parameter_tensors();
      adam_step(std::span<Tensor>(params), adam);

      ++step;
      ++steps;
      loss_sum += lv;
      result.step_losses.push_back(lv);
    }

    const auto report = evaluate_model(model, val, options.threshold, options.match_radius, options.batch);
    EpochLog row{epoch, step, loss_sum / double(steps), report.pixel.iou, report.target.pd, report.target.fa};
    result.log.push_back(row);
    const float iou = static_cast<float>(row.val_iou);
    if (iou > best) {
      best = iou;
      result.best_val_iou = iou;
      result.best_epoch = epoch;
      if (files) {
        auto records = model.to_records();
        records.insert(records.end(), options.extra_records.begin(), options.extra_records.end());
        save_checkpoint(options.out_dir / "best.ckpt", records);
      }
    }
    if (files) {
      write_train_log(log_path, result.log);
      save_train_state(state_path, {state_records(model), adam, epoch, step, best, result.best_epoch});
    }
    if (options.on_epoch) options.on_epoch(row);
  }
  return result;
}

void save_train_state(const std::filesystem::path& path, const TrainState& state) {
  auto records = state.model;
  const auto& a = state.adam;
  records.push_back(scalar_record("adam.t", double(a.t)));
  for (std::size_t i = 0; i < a.m.size(); ++i) {
    records.push_back({"adam.m." + std::to_string(i), {std::uint32_t(a.m[i].size())}, a.m[i]});
    records.push_back({"adam.v." + std::to_string(i), {std::uint32_t(a.v[i].size())}, a.v[i]});
  }
  records.push_back(scalar_record("train.epoch", double(state.epoch)));
  records.push_back(scalar_record("train.step", double(state.step)));
  records.push_back(scalar_record("train.best_val_iou", state.best_val_iou));
  records.push_back(scalar_record("train.best_epoch", double(state.best_epoch)));
  save_checkpoint(path, records);
}

TrainState load_train_state(const std::filesystem::path& path) {
  TrainState st;
  std::map<std::size_t, std::vector<float>> m, v;
  bool have_epoch = false;
  for (auto& r : load_checkpoint(path)) {
    auto scalar = [&] {
      if (r.values.size() != 1) throw ValueError("state record " + r.name + " must be a scalar");
      return r.values[0];
    };
    if (r.name == "adam.t") {
      st.adam.t = static_cast<std::uint64_t>(scalar());
    } else if (r.name.rfind("adam.m.", 0) == 0) {
      m[std::stoul(r.name.substr(7))] = std::move(r.values);
    } else if (r.name.rfind("adam.v.", 0) == 0) {
      v[std::stoul(r.name.substr(7))] = std::move(r.values);
    } else if (r.name == "train.epoch") {
      st.epoch = static_cast<std::size_t>(scalar());
      have_epoch = true;
    } else if (r.name == "train.step") {
      st.step = static_cast<std::size_t>(scalar());
    } else if (r.name == "train.best_val_iou") {
      st.best_val_iou = scalar();
    } else if (r.name == "train.best_epoch") {
      st.best_epoch = static_cast<std::size_t>(scalar());
    } else {
      st.model.push_back(std::move(r));
    }
  }
  if (!have_epoch) throw ValueError(path.string() + " is not a training state (no train.epoch)");
  if (m.size() != v.size()) throw ValueError("training state has mismatched Adam moments");
  for (std::size_t i = 0; i < m.size(); ++i) {
    if (!m.count(i) || !v.count(i)) throw ValueError("training state is missing Adam moment " + std::to_string(i));
    st.adam.m.push_back(std::move(m[i]));
    st.adam.v.push_back(std::move(v[i]));
  }
  return st;
}

void write_train_log(const std::filesystem::path& path, std::span<const EpochLog> rows) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write " + path.string());
  f << kLogHeader << '\n';
  for (const auto& r : rows)
    f << r.epoch << ',' << r.step << ',' << fmt(r.loss) << ',' << fmt(r.val_iou) << ',' << fmt(r.val_pd) << ','
      << fmt(r.val_fa) << '\n';
  if (!f) throw IoError("failed writing " + path.string());
}

std::vector<EpochLog> read_train_log(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot read " + path.string());
  std::vector<EpochLog> rows;
  std::string line;
  std::size_t offset = 0;
  bool header = true;
  while (std::getline(f, line)) {
    const std::size_t start = offset;
    offset += line.size() + 1;
    if (header) {
      if (line != kLogHeader) throw ParseError("unexpected training log header", start);
      header = false;
      continue;
    }
    if (line.empty()) continue;
    EpochLog r;
    char extra;
    if (std::sscanf(line.c_str(), "%zu,%zu,%lf,%lf,%lf,%lf%c", &r.epoch, &r.step, &r.loss, &r.val_iou, &r.val_pd,
                    &r.val_fa, &extra) != 6)
      throw ParseError("malformed training log row", start);
    rows.push_back(r);
  }
  return rows;
}

}  // namespace s2cp
