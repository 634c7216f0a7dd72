// SPDX-License-Identifier: Apache-2.0
// Command-line front end: data generation, the three training loops, the two
// evaluations, lemma verification, and scene previews.
#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "clamp/core/checkpoint.hpp"
#include "clamp/harness/eval.hpp"
#include "clamp/harness/train.hpp"
#include "clamp/stringpe/lemma_probe.hpp"
#include "clamp/world/episode.hpp"
#include "clamp/world/sensors.hpp"

namespace {

using namespace clamp;

struct ConfigArgs {
  std::string config_path;
  std::string dataset, val_dataset, out, tasks;
  int64_t steps = -1;
  int64_t seed = -1;
  int episodes_per_task = -1;
  int trials = 50;
  bool interleave = false;
  std::string encoders_ckpt, policy_ckpt, task = "pick_place";

  void attach(CLI::App* cmd, bool with_train = true) {
    cmd->add_option("--config", config_path, "TOML run configuration");
    cmd->add_option("--dataset", dataset, "training dataset directory");
    cmd->add_option("--val-dataset", val_dataset, "held-out dataset directory");
    cmd->add_option("--out", out, "artifact directory");
    if (with_train) {
      cmd->add_option("--steps", steps, "training steps");
      cmd->add_option("--seed", seed, "run seed");
    }
  }

  harness::RunConfig resolve() const {
    harness::RunConfig cfg;
    if (!config_path.empty()) cfg = harness::load_config(config_path);
    if (!dataset.empty()) cfg.dataset = dataset;
    if (!val_dataset.empty()) cfg.val_dataset = val_dataset;
    if (!out.empty()) cfg.out = out;
    if (!tasks.empty()) cfg.tasks = tasks;
    if (steps >= 0) cfg.steps = steps;
    if (seed >= 0) cfg.seed = static_cast<uint64_t>(seed);
    if (episodes_per_task >= 0) cfg.episodes_per_task = episodes_per_task;
    if (interleave) cfg.interleave_policy = true;
    harness::apply_env_seed(cfg);  // highest precedence
    cfg.validate();
    std::cout << "config: " << harness::canonical_json(cfg) << "\n";
    std::cout << "config_hash: " << harness::config_hash(cfg)
              << " arch_hash: " << harness::arch_hash(cfg) << "\n";
    return cfg;
  }
};

void write_ppm(const std::string& path, int h, int w,
               const std::function<std::array<double, 3>(int, int)>& pix) {
  std::ofstream out(path, std::ios::binary);
  if (!out) core::fail("preview", "cannot open '" + path + "'");
  out << "P6\n" << w << " " << h << "\n255\n";
  for (int v = 0; v < h; ++v)
    for (int u = 0; u < w; ++u) {
      auto c = pix(v, u);
      for (double x : c) {
        int b = static_cast<int>(std::lround(std::min(1.0, std::max(0.0, x)) * 255.0));
        out.put(static_cast<char>(b));
      }
    }
}

int cmd_gen_data(const ConfigArgs& a, bool keep_failures) {
  harness::RunConfig cfg = a.resolve();
  if (cfg.dataset.empty()) core::fail("gen-data", "--dataset (output directory) is required");
  world::GenConfig gc;
  gc.res = cfg.res;
  gc.keep_failures = keep_failures;
  std::vector<std::string> fams = harness::split_tasks(cfg.tasks);
  std::vector<world::Episode> eps =
      world::gen_episodes(fams, cfg.episodes_per_task, cfg.seed, gc);
  uint64_t hash = world::gen_config_hash(fams, cfg.episodes_per_task, cfg.seed, gc);
  world::write_dataset(eps, cfg.dataset, hash);
  std::cout << "wrote " << eps.size() << " episodes to " << cfg.dataset << " (x" << cfg.res
            << "px, hash " << hash << ")\n";
  return 0;
}

int cmd_pretrain(const ConfigArgs& a) {
  harness::RunConfig cfg = a.resolve();
  harness::PretrainResult r = harness::pretrain_encoders(cfg);
  std::cout << "loss: " << r.first_loss << " -> " << r.last_loss << "\n";
  std::cout << "checkpoint: " << r.checkpoint << "\n";
  if (!r.policy_checkpoint.empty()) std::cout << "policy checkpoint: " << r.policy_checkpoint << "\n";
  std::cout << "log: " << r.log_csv << "\n";
  return 0;
}

int cmd_pretrain_policy(const ConfigArgs& a) {
  harness::RunConfig cfg = a.resolve();
  harness::PolicyTrainResult r = harness::pretrain_policy(cfg);
  std::cout << "loss: " << r.first_loss << " -> " << r.last_loss << "\n";
  std::cout << "checkpoint: " << r.checkpoint << "\nlog: " << r.log_csv << "\n";
  return 0;
}

int cmd_finetune(const ConfigArgs& a, bool scratch) {
  harness::RunConfig cfg = a.resolve();
  harness::PolicyTrainResult r =
      scratch ? harness::train_policy_scratch(cfg)
              : harness::finetune_policy(cfg, a.encoders_ckpt, a.policy_ckpt);
  std::cout << "loss: " << r.first_loss << " -> " << r.last_loss << "\n";
  for (auto& [s, v] : r.val_curve) std::cout << "val@" << s << ": " << v << "\n";
  std::cout << "checkpoint: " << r.checkpoint << "\nlog: " << r.log_csv << "\n";
  return 0;
}

int cmd_eval_retrieval(const ConfigArgs& a) {
  harness::RunConfig cfg = a.resolve();
  std::string dir = cfg.val_dataset.empty() ? cfg.dataset : cfg.val_dataset;
  if (dir.empty()) core::fail("eval-retrieval", "need --dataset or --val-dataset");
  harness::LoadedDataset ds = harness::load_dataset(dir);
  harness::EvalSelection sel = harness::select_validation(ds);
  harness::extend_selection(ds, sel, cfg.val_examples);
  core::ParamStore64 ps = harness::build_encoder_store(cfg, cfg.seed);
  harness::load_artifact_into(ps, cfg, "encoders", a.encoders_ckpt);
  harness::RetrievalReport rep = harness::eval_retrieval(ps, cfg, ds, sel);
  std::cout << "selection: " << rep.n << " examples (" << sel.strict_count
            << " from the novelty rule)\n";
  for (size_t d = 0; d < harness::kRetrievalDirections.size(); ++d)
    std::printf("%-9s recall@1 %.4f recall@5 %.4f\n", harness::kRetrievalDirections[d],
                rep.recall1[d], rep.recall5[d]);
  std::printf("min recall@5: %.4f\n", rep.min_recall5());
  return 0;
}

int cmd_eval_policy(const ConfigArgs& a, uint64_t seed0) {
  harness::RunConfig cfg = a.resolve();
  core::ParamStore64 pol = harness::build_policy_store(cfg, cfg.seed);
  harness::ArtifactInfo info = harness::load_artifact_into(pol, cfg, "policy", a.policy_ckpt);
  if (!info.has_policy_aux) core::fail("eval-policy", "policy checkpoint lacks normalizer statistics");
  core::ParamStore64 enc(0);
  core::ParamStore64* enc_ptr = nullptr;
  if (!a.encoders_ckpt.empty()) {
    enc = harness::build_encoder_store(cfg, cfg.seed);
    harness::load_artifact_into(enc, cfg, "encoders", a.encoders_ckpt);
    enc_ptr = &enc;
  }
  harness::PolicyEvalResult r =
      harness::eval_policy(pol, cfg, a.task, a.trials, seed0, info.an, info.os, enc_ptr);
  std::cout << "task " << a.task << ": " << r.successes << "/" << r.trials
            << " succeeded (mean " << r.mean() << ")\n";
  std::cout << "per-trial:";
  for (uint8_t s : r.success) std::cout << " " << int(s);
  std::cout << "\n";
  return 0;
}

int cmd_verify_lemmas(int draws, uint64_t seed) {
  core::CounterRng rng(seed);
  bool all_ok = true;
  // closed-form score vs the encoded-rotation path, plus the zero-offset
  // reduction to plain q.k
  for (int d : {4, 8, 64}) {
    double worst = 0.0, worst_zero = 0.0;
    for (int it = 0; it < draws; ++it) {
      uint64_t base = static_cast<uint64_t>(it) * 1000 + static_cast<uint64_t>(d);
      stringpe::StringParams p = stringpe::StringParams::init(d, seed ^ base, 0.4);
      core::Tensor64 Q({1, d}), K({1, d});
      for (int j = 0; j < d; ++j) {
        Q.at(0, j) = rng.normal("q", base * 64 + static_cast<uint64_t>(j));
        K.at(0, j) = rng.normal("k", base * 64 + static_cast<uint64_t>(j));
      }
      core::Tensor64 coords({2, 3});
      for (int j = 0; j < 3; ++j) {
        coords.at(0, j) = rng.uniform("c0", base * 3 + static_cast<uint64_t>(j)) - 0.5;
        coords.at(1, j) = rng.uniform("c1", base * 3 + static_cast<uint64_t>(j)) - 0.5;
      }
      std::vector<double> q(Q.data), k(K.data);
      geom::Vec3 r{coords.at(1, 0) - coords.at(0, 0), coords.at(1, 1) - coords.at(0, 1),
                   coords.at(1, 2) - coords.at(0, 2)};
      core::Tensor64 QK({2, d});
      for (int j = 0; j < d; ++j) {
        QK.at(0, j) = Q.at(0, j);
        QK.at(1, j) = K.at(0, j);
      }
      core::Tensor64 s = stringpe::attention_scores(QK, QK, coords, p);
      double closed = stringpe::score_lemma1(q, k, r, p);
      double rel = std::abs(closed - s.at(0, 1)) / std::max(1.0, std::abs(closed));
      worst = std::max(worst, rel);
      core::Tensor64 same({2, 3});
      for (int j = 0; j < 3; ++j) same.at(0, j) = same.at(1, j) = coords.at(0, j);
      core::Tensor64 s0 = stringpe::attention_scores(QK, QK, same, p);
      double dot = 0;
      for (int j = 0; j < d; ++j) dot += q[static_cast<size_t>(j)] * k[static_cast<size_t>(j)];
      worst_zero = std::max(worst_zero, std::abs(s0.at(0, 1) - dot));
    }
    bool ok = worst < 1e-9 && worst_zero < 1e-12;
    all_ok = all_ok && ok;
    std::printf("[%s] closed-form equivalence d=%-2d  max rel %.3e, zero-offset %.3e\n",
                ok ? "PASS" : "FAIL", d, worst, worst_zero);
  }
  // orthogonality of the Cayley map
  double worst_orth = 0.0;
  for (int it = 0; it < draws; ++it) {
    stringpe::StringParams p = stringpe::StringParams::init(8, seed + 77 + static_cast<uint64_t>(it), 0.8);
    core::Tensor64 P = stringpe::cayley_orthogonal(p);
    int n = P.shape[0];
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) {
        double g = 0;
        for (int m = 0; m < n; ++m) g += P.at(m, i) * P.at(m, j);
        worst_orth = std::max(worst_orth, std::abs(g - (i == j ? 1.0 : 0.0)));
      }
  }
  bool orth_ok = worst_orth < 1e-9;
  all_ok = all_ok && orth_ok;
  std::printf("[%s] cayley orthogonality      max |P^T P - I| %.3e\n", orth_ok ? "PASS" : "FAIL",
              worst_orth);
  // distance decay along the admissible interval
  int decay_fail = 0;
  int configs = std::max(1, draws / 20);
  for (int it = 0; it < configs; ++it) {
    stringpe::Lemma2ProbeConfig pc;
    pc.d_qk = 4 + 2 * (it % 4);
    pc.phi = 0.1 + 0.4 * (it % 5) / 5.0;
    stringpe::Lemma2Report rep = stringpe::lemma2_probe(pc, seed + static_cast<uint64_t>(it));
    if (!rep.strictly_decreasing) ++decay_fail;
  }
  bool decay_ok = decay_fail == 0;
  all_ok = all_ok && decay_ok;
  std::printf("[%s] distance decay            %d/%d probe configs strictly decreasing\n",
              decay_ok ? "PASS" : "FAIL", configs - decay_fail, configs);
  std::printf("%s\n", all_ok ? "all lemma checks passed" : "LEMMA CHECKS FAILED");
  return all_ok ? 0 : 1;
}

int cmd_render_preview(const std::string& family, uint64_t seed, const std::string& out_dir,
                       int res, int views_res) {
  std::filesystem::create_directories(out_dir);
  world::Scene scene = world::gen_scene(seed, family);
  world::RobotState robot = world::home_robot();
  std::vector<geom::CameraModel> cams = world::external_cameras(res);
  cams.insert(cams.begin(), world::overhead_camera(res));
  const char* names[] = {"overhead", "front_left", "back_right"};
  for (size_t c = 0; c < cams.size(); ++c) {
    world::SensorFrame f = world::render_rgbd(scene, robot, cams[c]);
    std::string path = out_dir + "/" + names[c] + ".ppm";
    write_ppm(path, res, res, [&](int v, int u) {
      int idx = v * res + u;
      return std::array<double, 3>{f.rgb.at(idx, 0), f.rgb.at(idx, 1), f.rgb.at(idx, 2)};
    });
    std::cout << "wrote " << path << "\n";
  }
  // virtual-view tile from the two external captures
  harness::RunConfig cfg;
  cfg.res = res;
  cfg.views_res = views_res;
  std::vector<core::Tensor64> depths;
  for (size_t c = 1; c < cams.size(); ++c)
    depths.push_back(world::render_rgbd(scene, robot, cams[c]).depth);
  geom::MultiViewObservation mvo =
      harness::observation_from_frames(cfg, depths, robot.joints(), res);
  double dmax = 0;
  for (int v = 0; v < mvo.tiled.height; ++v)
    for (int u = 0; u < mvo.tiled.width; ++u) dmax = std::max(dmax, mvo.tiled.at(v, u, 0));
  std::string tile_path = out_dir + "/virtual_views.ppm";
  write_ppm(tile_path, mvo.tiled.height, mvo.tiled.width, [&](int v, int u) {
    double d = mvo.tiled.at(v, u, 0);
    double g = (d <= 0.0 || dmax <= 0.0) ? 0.0 : 1.0 - 0.8 * d / dmax;
    return std::array<double, 3>{g, g, g};
  });
  std::cout << "wrote " << tile_path << "\n";
  std::cout << "text: " << world::make_text(scene, 0) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"desk-scale multimodal contrastive pretraining and diffusion policy"};
  app.require_subcommand(1);

  ConfigArgs gen_args;
  bool keep_failures = false;
  CLI::App* gen = app.add_subcommand("gen-data", "generate a scripted-expert episode dataset");
  gen->add_option("--tasks", gen_args.tasks, "comma-separated task families");
  gen->add_option("--episodes-per-task", gen_args.episodes_per_task, "episodes per family");
  gen->add_option("--seed", gen_args.seed, "generation seed");
  gen->add_option("--out,--dataset", gen_args.dataset, "output directory")->required();
  gen->add_flag("--keep-failures", keep_failures, "keep infeasible episodes");
  gen->add_option("--config", gen_args.config_path, "TOML run configuration");

  ConfigArgs pre_args;
  CLI::App* pre = app.add_subcommand("pretrain", "contrastive encoder pretraining");
  pre_args.attach(pre);
  pre->add_flag("--interleave-policy", pre_args.interleave,
                "also pretrain a diffusion policy on the same batches");

  ConfigArgs pp_args;
  CLI::App* pp = app.add_subcommand("pretrain-policy", "diffusion policy pretraining");
  pp_args.attach(pp);

  ConfigArgs ft_args;
  bool ft_scratch = false;
  CLI::App* ft = app.add_subcommand("finetune", "fine-tune a pretrained policy with frozen encoders");
  ft_args.attach(ft);
  ft->add_option("--encoders", ft_args.encoders_ckpt, "encoder checkpoint");
  ft->add_option("--policy", ft_args.policy_ckpt, "policy checkpoint");
  ft->add_flag("--scratch", ft_scratch, "train the matched from-scratch baseline instead");

  ConfigArgs er_args;
  CLI::App* er = app.add_subcommand("eval-retrieval", "cross-modal recall over the validation selection");
  er_args.attach(er, false);
  er->add_option("--encoders", er_args.encoders_ckpt, "encoder checkpoint")->required();

  ConfigArgs ep_args;
  uint64_t ep_seed0 = 9000;
  CLI::App* epol = app.add_subcommand("eval-policy", "rollout success rate on fresh scenes");
  ep_args.attach(epol, false);
  epol->add_option("--policy", ep_args.policy_ckpt, "policy checkpoint")->required();
  epol->add_option("--encoders", ep_args.encoders_ckpt, "encoder checkpoint (fine-tuned policies)");
  epol->add_option("--task", ep_args.task, "task family");
  epol->add_option("--trials", ep_args.trials, "number of rollouts");
  epol->add_option("--seed0", ep_seed0, "first scene seed");

  int vl_draws = 200;
  uint64_t vl_seed = 12345;
  CLI::App* vl = app.add_subcommand("verify-lemmas", "run the positional-encoding property probes");
  vl->add_option("--draws", vl_draws, "draws per check");
  vl->add_option("--seed", vl_seed, "probe seed");

  std::string rp_family = "pick_place", rp_out = "preview";
  uint64_t rp_seed = 1;
  int rp_res = 96, rp_views_res = 48;
  CLI::App* rp = app.add_subcommand("render-preview", "write PPM previews of a generated scene");
  rp->add_option("--task", rp_family, "task family");
  rp->add_option("--seed", rp_seed, "scene seed");
  rp->add_option("--out", rp_out, "output directory");
  rp->add_option("--res", rp_res, "capture resolution");
  rp->add_option("--views-res", rp_views_res, "virtual view resolution");

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) return cmd_gen_data(gen_args, keep_failures);
    if (pre->parsed()) return cmd_pretrain(pre_args);
    if (pp->parsed()) return cmd_pretrain_policy(pp_args);
    if (ft->parsed()) {
      if (!ft_scratch && (ft_args.encoders_ckpt.empty() || ft_args.policy_ckpt.empty()))
        core::fail("finetune", "--encoders and --policy are required (or pass --scratch)");
      return cmd_finetune(ft_args, ft_scratch);
    }
    if (er->parsed()) return cmd_eval_retrieval(er_args);
    if (epol->parsed()) return cmd_eval_policy(ep_args, ep_seed0);
    if (vl->parsed()) return cmd_verify_lemmas(vl_draws, vl_seed);
    if (rp->parsed()) return cmd_render_preview(rp_family, rp_seed, rp_out, rp_res, rp_views_res);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
