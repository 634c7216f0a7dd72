// SPDX-License-Identifier: Apache-2.0
#include "clamp/harness/train.hpp"

#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "clamp/core/checkpoint.hpp"
#include "clamp/core/optim.hpp"
#include "clamp/policy/schedule.hpp"

namespace clamp::harness {

using core::ParamStore64;
using core::Tensor64;
using nlohmann::json;

core::ParamStore64 build_encoder_store(const RunConfig& cfg, uint64_t seed) {
  ParamStore64 ps(seed);
  enc::add_encoder_params(ps, cfg.encoder_config());
  contrastive::add_temp_bias_params(ps, "tb");
  return ps;
}

core::ParamStore64 build_policy_store(const RunConfig& cfg, uint64_t seed) {
  ParamStore64 ps(seed);
  policy::add_policy_params(ps, cfg.policy_config());
  return ps;
}

namespace {

json tensor_to_json(const Tensor64& t) {
  json j = json::object();
  j["shape"] = t.shape;
  j["data"] = t.data;
  return j;
}

Tensor64 tensor_from_json(const json& j) {
  Tensor64 t(j.at("shape").get<std::vector<int>>());
  std::vector<double> data = j.at("data").get<std::vector<double>>();
  if (static_cast<int64_t>(data.size()) != t.numel())
    core::fail("artifact", "sidecar tensor size mismatch");
  t.data = std::move(data);
  return t;
}

// fixed shortest-round-trip formatting keeps logs byte-reproducible
std::string num17(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

class CsvLog {
 public:
  CsvLog(const std::string& path, const std::string& header) : out_(path, std::ios::binary) {
    if (!out_) core::fail("csv", "cannot open '" + path + "'");
    out_ << header << "\n";
  }
  void row(int64_t step, std::initializer_list<double> vals) {
    out_ << step;
    for (double v : vals) out_ << "," << num17(v);
    out_ << "\n";
    out_.flush();
  }

 private:
  std::ofstream out_;
};

void check_dataset(const RunConfig& cfg, const LoadedDataset& ds) {
  if (ds.res() != cfg.res)
    core::fail("config", "dataset resolution " + std::to_string(ds.res()) +
                             " does not match configured res " + std::to_string(cfg.res));
}

}  // namespace

void save_artifact(const core::ParamStore64& ps, const RunConfig& cfg, const std::string& kind,
                   int64_t step, const std::string& path, const policy::ActionNormalizer* an,
                   const policy::ObsStats* os) {
  std::filesystem::create_directories(std::filesystem::path(path).parent_path().empty()
                                          ? "."
                                          : std::filesystem::path(path).parent_path().string());
  core::save_checkpoint(ps, path);
  json j = json::object();
  j["kind"] = kind;
  j["step"] = step;
  j["config_hash"] = std::to_string(config_hash(cfg));
  j["arch_hash"] = std::to_string(arch_hash(cfg));
  j["config"] = json::parse(canonical_json(cfg));
  if (an && os) {
    j["normalizer"] = {{"lo", tensor_to_json(an->lo)}, {"hi", tensor_to_json(an->hi)}};
    j["obs_stats"] = {{"proprio_mean", tensor_to_json(os->proprio_mean)},
                      {"proprio_std", tensor_to_json(os->proprio_std)},
                      {"rgb_mean", os->rgb_mean},
                      {"rgb_std", os->rgb_std}};
  }
  std::ofstream side(path + ".json", std::ios::binary);
  if (!side) core::fail("artifact", "cannot write sidecar for '" + path + "'");
  side << j.dump(2) << "\n";
}

ArtifactInfo read_artifact_info(const std::string& path) {
  std::ifstream side(path + ".json", std::ios::binary);
  if (!side) core::fail("artifact", "missing sidecar '" + path + ".json'");
  json j;
  try {
    side >> j;
  } catch (const std::exception& e) {
    core::fail("artifact", std::string("unreadable sidecar: ") + e.what());
  }
  ArtifactInfo info;
  info.kind = j.at("kind").get<std::string>();
  info.step = j.at("step").get<int64_t>();
  info.config_hash = std::stoull(j.at("config_hash").get<std::string>());
  info.arch_hash = std::stoull(j.at("arch_hash").get<std::string>());
  if (j.contains("normalizer")) {
    info.has_policy_aux = true;
    info.an.lo = tensor_from_json(j.at("normalizer").at("lo"));
    info.an.hi = tensor_from_json(j.at("normalizer").at("hi"));
    info.os.proprio_mean = tensor_from_json(j.at("obs_stats").at("proprio_mean"));
    info.os.proprio_std = tensor_from_json(j.at("obs_stats").at("proprio_std"));
    info.os.rgb_mean = j.at("obs_stats").at("rgb_mean").get<double>();
    info.os.rgb_std = j.at("obs_stats").at("rgb_std").get<double>();
  }
  return info;
}

ArtifactInfo load_artifact_into(core::ParamStore64& ps, const RunConfig& cfg,
                                const std::string& expected_kind, const std::string& path,
                                bool check_arch) {
  ArtifactInfo info = read_artifact_info(path);
  if (info.kind != expected_kind)
    core::fail("artifact", "'" + path + "' holds a " + info.kind + " checkpoint, expected " +
                               expected_kind);
  if (check_arch && info.arch_hash != arch_hash(cfg))
    core::fail("artifact", "architecture digest mismatch for '" + path +
                               "': checkpoint was written under an incompatible config");
  core::load_checkpoint_into(ps, path);
  return info;
}

double triplet_batch_loss(core::ParamStore64& ps, const RunConfig& cfg, const TripletBatch& batch,
                          std::map<std::string, core::Tensor64>* grads) {
  if (batch.obs.empty()) core::fail("triplet_loss", "empty batch");
  enc::EncoderConfig ec = cfg.encoder_config();
  core::Graph64 g(&ps);
  std::vector<core::Id> xs, ys, zs;
  for (size_t i = 0; i < batch.obs.size(); ++i) {
    xs.push_back(enc::image_encode_graph(g, ec, "img", batch.obs[i]).pooled);
    ys.push_back(enc::text_encode_graph(g, ec, "txt", batch.text[i]).pooled);
    zs.push_back(enc::action_encode_graph(g, ec, "act", batch.hist[i]).pooled);
  }
  core::Id X = g.concat_rows(xs);
  core::Id Y = g.concat_rows(ys);
  core::Id Z = g.concat_rows(zs);
  core::Id loss = contrastive::tri_modal_loss_graph(g, X, Y, Z, "tb", cfg.literal_sign);
  if (grads) {
    g.backward(loss);
    *grads = g.param_gradients();
  }
  return g.scalar_value(loss);
}

double policy_validation_mse(core::ParamStore64& ps, const RunConfig& cfg,
                             const std::vector<policy::PolicyExample>& examples,
                             uint64_t noise_seed) {
  if (examples.empty()) core::fail("policy_val", "no validation examples");
  policy::NoiseSchedule sched = policy::make_schedule(cfg.diffusion_steps);
  core::CounterRng rng(noise_seed);
  return policy::policy_batch_loss(ps, cfg.policy_config(), examples, sched, rng, 0);
}

namespace {

std::vector<ExampleRef> spaced_subset(const std::vector<ExampleRef>& pool, int want) {
  if (static_cast<int>(pool.size()) <= want) return pool;
  std::vector<ExampleRef> out;
  for (int i = 0; i < want; ++i)
    out.push_back(pool[static_cast<size_t>(i) * pool.size() / static_cast<size_t>(want)]);
  return out;
}

struct TokenCache {
  std::map<std::pair<int, int>, FrozenTokens> m;
  const FrozenTokens& get(ParamStore64& enc_ps, const RunConfig& cfg, const LoadedDataset& ds,
                          ExampleRef r) {
    auto key = std::make_pair(r.episode, r.step);
    auto it = m.find(key);
    if (it == m.end())
      it = m.emplace(key, frozen_tokens(enc_ps, cfg, ds.episodes[static_cast<size_t>(r.episode)],
                                        r.step))
               .first;
    return it->second;
  }
};

enum class PolicyMode { kPretrain, kFinetune, kScratch };

PolicyTrainResult run_policy_training(const RunConfig& cfg, PolicyMode mode,
                                      const std::string& enc_ckpt, const std::string& pol_ckpt) {
  cfg.validate();
  LoadedDataset ds = load_dataset(cfg.dataset);
  check_dataset(cfg, ds);
  std::filesystem::create_directories(cfg.out);

  policy::PolicyConfig pcfg = cfg.policy_config();
  policy::NoiseSchedule sched = policy::make_schedule(cfg.diffusion_steps);
  ParamStore64 store = build_policy_store(cfg, cfg.seed);

  ParamStore64 enc_store(0);
  TokenCache cache, val_cache;
  policy::ActionNormalizer an;
  policy::ObsStats os;
  const char* prefix = mode == PolicyMode::kPretrain  ? "policy"
                       : mode == PolicyMode::kFinetune ? "finetune"
                                                        : "scratch";
  if (mode == PolicyMode::kFinetune) {
    ArtifactInfo info = load_artifact_into(store, cfg, "policy", pol_ckpt);
    if (!info.has_policy_aux)
      core::fail("finetune", "policy checkpoint lacks normalizer statistics");
    an = info.an;
    os = info.os;
    enc_store = build_encoder_store(cfg, cfg.seed);
    load_artifact_into(enc_store, cfg, "encoders", enc_ckpt);
    // the towers feed constants only, but mark them frozen so any in-graph
    // use keeps exactly-zero gradients
    for (const char* p : {"img", "act", "txt"}) enc_store.set_trainable_prefix(p, false);
  } else {
    an = fit_normalizer(ds);
    os = fit_obs_stats(ds);
  }

  PolicyTrainResult res;
  if (mode == PolicyMode::kFinetune) {
    res.checkpoint = cfg.out + "/finetune.ckpt";
    // the loaded weights, re-serialized before any update: bit-equal to the
    // pretraining checkpoint's parameter payload
    save_artifact(store, cfg, "policy", 0, cfg.out + "/finetune_step0.ckpt", &an, &os);
  } else {
    res.checkpoint = cfg.out + std::string("/") + prefix + ".ckpt";
  }

  // held-out validation examples with per-model observation pipelines but a
  // shared example list and shared noise draws
  std::vector<policy::PolicyExample> val;
  LoadedDataset val_ds;
  if (!cfg.val_dataset.empty()) {
    val_ds = load_dataset(cfg.val_dataset);
    check_dataset(cfg, val_ds);
    for (ExampleRef r : spaced_subset(all_examples(val_ds), cfg.val_examples)) {
      policy::PolicyExample ex = build_policy_example(
          cfg, val_ds.episodes[static_cast<size_t>(r.episode)], r.step, an, os);
      if (mode == PolicyMode::kFinetune) {
        const FrozenTokens& ft = val_cache.get(enc_store, cfg, val_ds, r);
        ex.obs.frozen_img = ft.img;
        ex.obs.frozen_act = ft.act;
      }
      val.push_back(std::move(ex));
    }
  }
  uint64_t val_noise_seed = cfg.seed ^ 0x76616c6eULL;  // shared by matched runs

  std::vector<ExampleRef> pool = all_examples(ds);
  core::CounterRng rng(cfg.seed);
  core::Adam64 opt;
  res.log_csv = cfg.out + std::string("/") + prefix + "_log.csv";
  CsvLog log(res.log_csv, "step,lr,loss");
  std::unique_ptr<CsvLog> val_log;
  if (!val.empty())
    val_log = std::make_unique<CsvLog>(cfg.out + std::string("/") + prefix + "_val.csv",
                                       "step,val_mse");

  for (int64_t step = 0; step < cfg.steps; ++step) {
    std::vector<ExampleRef> refs =
        sample_batch(pool, cfg.pol_batch, rng, static_cast<uint64_t>(step));
    std::vector<policy::PolicyExample> batch;
    for (ExampleRef r : refs) {
      policy::PolicyExample ex =
          build_policy_example(cfg, ds.episodes[static_cast<size_t>(r.episode)], r.step, an, os);
      if (mode == PolicyMode::kFinetune) {
        const FrozenTokens& ft = cache.get(enc_store, cfg, ds, r);
        ex.obs.frozen_img = ft.img;
        ex.obs.frozen_act = ft.act;
      }
      batch.push_back(std::move(ex));
    }
    double lr = core::cosine_warmup_lr(step, cfg.steps, cfg.warmup_frac, cfg.pol_lr);
    double loss = policy::policy_train_step(store, pcfg, batch, sched, opt, lr, rng,
                                            static_cast<uint64_t>(step));
    if (step == 0) res.first_loss = loss;
    res.last_loss = loss;
    log.row(step, {lr, loss});
    if (!val.empty() && ((step + 1) % cfg.eval_every == 0 || step + 1 == cfg.steps)) {
      double v = policy_validation_mse(store, cfg, val, val_noise_seed);
      res.val_curve.emplace_back(step + 1, v);
      val_log->row(step + 1, {v});
    }
  }

  save_artifact(store, cfg, "policy", cfg.steps, res.checkpoint, &an, &os);
  return res;
}

}  // namespace

PretrainResult pretrain_encoders(const RunConfig& cfg) {
  cfg.validate();
  LoadedDataset ds = load_dataset(cfg.dataset);
  check_dataset(cfg, ds);
  std::filesystem::create_directories(cfg.out);

  ParamStore64 store = build_encoder_store(cfg, cfg.seed);
  std::vector<ExampleRef> pool = all_examples(ds);
  core::CounterRng rng(cfg.seed);
  core::Adam64 opt;

  // optional interleaved diffusion-policy pretraining on the same sampled
  // refs; no embeddings cross between the two models
  policy::PolicyConfig pcfg = cfg.policy_config();
  policy::NoiseSchedule sched = policy::make_schedule(cfg.diffusion_steps);
  ParamStore64 pol_store(0);
  policy::ActionNormalizer an;
  policy::ObsStats os;
  core::Adam64 pol_opt;
  if (cfg.interleave_policy) {
    pol_store = build_policy_store(cfg, cfg.seed);
    an = fit_normalizer(ds);
    os = fit_obs_stats(ds);
  }

  PretrainResult res;
  res.log_csv = cfg.out + "/pretrain_log.csv";
  CsvLog log(res.log_csv, cfg.interleave_policy ? "step,lr,loss,policy_loss" : "step,lr,loss");

  for (int64_t step = 0; step < cfg.steps; ++step) {
    std::vector<ExampleRef> refs = sample_batch(pool, cfg.batch, rng, static_cast<uint64_t>(step));
    TripletBatch batch = build_triplets(cfg, ds, refs);
    double lr = core::cosine_warmup_lr(step, cfg.steps, cfg.warmup_frac, cfg.enc_lr);
    std::map<std::string, Tensor64> grads;
    double loss = triplet_batch_loss(store, cfg, batch, &grads);
    opt.step(store, grads, lr);
    if (step == 0) res.first_loss = loss;
    res.last_loss = loss;
    if (cfg.interleave_policy) {
      std::vector<policy::PolicyExample> pol_batch;
      for (int i = 0; i < cfg.pol_batch && i < static_cast<int>(refs.size()); ++i)
        pol_batch.push_back(build_policy_example(
            cfg, ds.episodes[static_cast<size_t>(refs[static_cast<size_t>(i)].episode)],
            refs[static_cast<size_t>(i)].step, an, os));
      double plr = core::cosine_warmup_lr(step, cfg.steps, cfg.warmup_frac, cfg.pol_lr);
      double ploss = policy::policy_train_step(pol_store, pcfg, pol_batch, sched, pol_opt, plr,
                                               rng, static_cast<uint64_t>(step));
      log.row(step, {lr, loss, ploss});
    } else {
      log.row(step, {lr, loss});
    }
  }

  res.checkpoint = cfg.out + "/encoders.ckpt";
  save_artifact(store, cfg, "encoders", cfg.steps, res.checkpoint);
  if (cfg.interleave_policy) {
    res.policy_checkpoint = cfg.out + "/policy.ckpt";
    save_artifact(pol_store, cfg, "policy", cfg.steps, res.policy_checkpoint, &an, &os);
  }
  return res;
}

PolicyTrainResult pretrain_policy(const RunConfig& cfg) {
  return run_policy_training(cfg, PolicyMode::kPretrain, "", "");
}

PolicyTrainResult finetune_policy(const RunConfig& cfg, const std::string& encoder_ckpt,
                                  const std::string& policy_ckpt) {
  return run_policy_training(cfg, PolicyMode::kFinetune, encoder_ckpt, policy_ckpt);
}

PolicyTrainResult train_policy_scratch(const RunConfig& cfg) {
  return run_policy_training(cfg, PolicyMode::kScratch, "", "");
}

}  // namespace clamp::harness
