// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>

#include "clamp/core/checkpoint.hpp"
#include "clamp/harness/eval.hpp"
#include "clamp/harness/train.hpp"
#include "clamp/world/expert.hpp"

using namespace clamp;
using clamp::core::Tensor64;

namespace {

std::string tmp_dir(const std::string& tag) {
  auto p = std::filesystem::temp_directory_path() /
           ("clamp_harness_" + tag + "_" + std::to_string(::getpid()));
  std::filesystem::create_directories(p);
  return p.string();
}

bool same_file_bytes(const std::string& a, const std::string& b) {
  std::ifstream fa(a, std::ios::binary), fb(b, std::ios::binary);
  REQUIRE(bool(fa));
  REQUIRE(bool(fb));
  std::string sa((std::istreambuf_iterator<char>(fa)), std::istreambuf_iterator<char>());
  std::string sb((std::istreambuf_iterator<char>(fb)), std::istreambuf_iterator<char>());
  return sa == sb;
}

// small-but-complete configuration used across the suite; the dataset is
// generated once and shared read-only
harness::RunConfig tiny_config() {
  harness::RunConfig cfg;
  cfg.res = 16;
  cfg.views_res = 16;
  cfg.voxel = 0.01;
  cfg.embed = 16;
  cfg.enc_layers = 1;
  cfg.enc_heads = 2;
  cfg.enc_mlp = 32;
  cfg.patch = 8;
  cfg.history = 8;
  cfg.text_tokens = 128;
  cfg.pol_width = 16;
  cfg.pol_enc_layers = 1;
  cfg.pol_dec_layers = 1;
  cfg.pol_heads = 2;
  cfg.pol_mlp = 32;
  cfg.chunk = 4;
  cfg.diffusion_steps = 25;
  cfg.batch = 6;
  cfg.pol_batch = 4;
  cfg.steps = 8;
  cfg.eval_every = 4;
  cfg.seed = 11;
  cfg.val_examples = 8;
  return cfg;
}

const std::string& shared_dataset() {
  static std::string dir = [] {
    std::string d = tmp_dir("data");
    world::GenConfig gc;
    gc.res = 16;
    std::vector<world::Episode> eps = world::gen_episodes({"pick_place"}, 6, 100, gc);
    world::write_dataset(eps, d, 42);
    return d;
  }();
  return dir;
}

const std::string& shared_val_dataset() {
  static std::string dir = [] {
    std::string d = tmp_dir("val");
    world::GenConfig gc;
    gc.res = 16;
    std::vector<world::Episode> eps = world::gen_episodes({"pick_place"}, 4, 7700, gc);
    world::write_dataset(eps, d, 43);
    return d;
  }();
  return dir;
}

double mean_dot_expectation(int d, int B, const contrastive::TempBias& tb) {
  // E[loss] for independent uniform unit vectors: the dot of two such
  // vectors has density c (1-u^2)^((d-3)/2) on [-1,1]; diagonal pairs sit at
  // z = t+b (dot = 1). Plain composite integration is the oracle.
  const int N = 200001;
  double t = tb.t(), b = tb.b;
  auto softplus = [](double x) { return x > 30 ? x : std::log1p(std::exp(x)); };
  double norm = 0, off = 0;
  double h = 2.0 / (N - 1);
  for (int i = 0; i < N; ++i) {
    double u = -1.0 + h * i;
    double w = (i == 0 || i == N - 1) ? 0.5 : 1.0;
    double dens = std::pow(std::max(0.0, 1.0 - u * u), (d - 3) / 2.0);
    norm += w * dens;
    off += w * dens * softplus(t * u + b);
  }
  off /= norm;
  double diag = softplus(-(t * 1.0 + b));
  return diag + (B - 1) * off;
}

}  // namespace

TEST_CASE("config: toml round trip, env override, unknown keys") {
  std::string dir = tmp_dir("cfg");
  std::string path = dir + "/run.toml";
  {
    std::ofstream f(path);
    f << "# comment\n[run]\nembed = 24\nenc_heads = 3\nvoxel = 0.02  # inline\n"
      << "dataset = \"/tmp/x\"\nwrist_views = false\nsteps = 77\nseed = 5\n";
  }
  harness::RunConfig cfg = harness::load_config(path);
  CHECK(cfg.embed == 24);
  CHECK(cfg.enc_heads == 3);
  CHECK(cfg.voxel == 0.02);
  CHECK(cfg.dataset == "/tmp/x");
  CHECK(cfg.wrist_views == false);
  CHECK(cfg.steps == 77);
  CHECK(cfg.seed == 5);

  // environment seed wins
  ::setenv("CLAMP_SEED", "99", 1);
  harness::RunConfig cfg2 = harness::load_config(path);
  CHECK(cfg2.seed == 99);
  ::unsetenv("CLAMP_SEED");

  {
    std::ofstream f(path);
    f << "embeddd = 24\n";
  }
  CHECK_THROWS(harness::load_config(path));
  {
    std::ofstream f(path);
    f << "embed = oops\n";
  }
  CHECK_THROWS(harness::load_config(path));

  harness::RunConfig bad = tiny_config();
  bad.views_res = 12;  // not a multiple of patch
  CHECK_THROWS(bad.validate());
}

TEST_CASE("config: digests separate architecture from run settings") {
  harness::RunConfig a = tiny_config();
  harness::RunConfig b = a;
  b.steps = 999;  // run setting: config digest moves, arch digest does not
  CHECK(harness::config_hash(a) != harness::config_hash(b));
  CHECK(harness::arch_hash(a) == harness::arch_hash(b));
  harness::RunConfig c = a;
  c.wrist_views = false;  // changes the image token count
  CHECK(harness::arch_hash(c) != harness::arch_hash(a));
  CHECK(c.image_tokens() < a.image_tokens());
  // canonical JSON is stable across calls
  CHECK(harness::canonical_json(a) == harness::canonical_json(tiny_config()));
}

TEST_CASE("data: observation, history, text builders") {
  harness::RunConfig cfg = tiny_config();
  harness::LoadedDataset ds = harness::load_dataset(shared_dataset());
  REQUIRE(ds.episodes.size() == 6);
  const world::Episode& ep = ds.episodes[0];

  geom::MultiViewObservation obs = harness::build_observation(cfg, ep, 3);
  CHECK(obs.tiled.height == cfg.views_res);
  CHECK(obs.tiled.width == 5 * cfg.views_res);
  geom::MultiViewObservation obs2 = harness::build_observation(cfg, ep, 3);
  CHECK(obs.tiled.data == obs2.tiled.data);  // deterministic
  harness::RunConfig nw = cfg;
  nw.wrist_views = false;
  CHECK(harness::build_observation(nw, ep, 3).tiled.width == 3 * cfg.views_res);

  // wrist content tracks the arm
  int t_late = 20;
  geom::MultiViewObservation late = harness::build_observation(cfg, ep, t_late);
  bool wrist_differs = false, fixed_same = true;
  int wrist_off = 3 * cfg.views_res;
  for (int v = 0; v < late.tiled.height; ++v)
    for (int u = 0; u < late.tiled.width; ++u)
      for (int ch = 0; ch < 4; ++ch) {
        double a = harness::build_observation(cfg, ep, 0).tiled.at(v, u, ch);
        double b = late.tiled.at(v, u, ch);
        if (u >= wrist_off && a != b) wrist_differs = true;
        (void)fixed_same;
      }
  CHECK(wrist_differs);

  // history: strictly-previous actions, oldest first, zero prefix padding
  enc::ActionHistory h0 = harness::build_history(cfg, ep, 0);
  for (uint8_t m : h0.mask) CHECK(m == 0);
  for (double v : h0.steps.data) CHECK(v == 0.0);
  enc::ActionHistory h3 = harness::build_history(cfg, ep, 3);
  for (int i = 0; i < cfg.history; ++i) CHECK(int(h3.mask[i]) == (i >= cfg.history - 3 ? 1 : 0));
  for (int j = 0; j < world::kActionDim; ++j) {
    CHECK(h3.steps.at(cfg.history - 1, j) == ep.steps[2].action[j]);  // most recent = t-1
    CHECK(h3.steps.at(cfg.history - 3, j) == ep.steps[0].action[j]);
  }
  std::vector<Tensor64> executed = {ep.steps[0].action, ep.steps[1].action, ep.steps[2].action};
  enc::ActionHistory hx = harness::history_from_actions(cfg, executed);
  CHECK(hx.steps.data == h3.steps.data);
  CHECK(hx.mask == h3.mask);

  std::vector<int> ids = harness::build_text_ids(cfg, ep, 3);
  CHECK(int(ids.size()) == cfg.text_tokens);
  CHECK(ids.back() == enc::Vocab::kPad);
  bool has_real = false;
  for (int id : ids) has_real = has_real || (id != enc::Vocab::kPad && id != enc::Vocab::kUnk);
  CHECK(has_real);
  harness::RunConfig small = cfg;
  small.text_tokens = 16;
  CHECK_THROWS(harness::build_text_ids(small, ep, 3));
}

TEST_CASE("data: batch sampling is deterministic and repeat-free") {
  harness::LoadedDataset ds = harness::load_dataset(shared_dataset());
  std::vector<harness::ExampleRef> pool = harness::all_examples(ds);
  CHECK(int64_t(pool.size()) == ds.total_steps());
  core::CounterRng rng(3);
  auto b1 = harness::sample_batch(pool, 16, rng, 0);
  auto b2 = harness::sample_batch(pool, 16, rng, 0);
  auto b3 = harness::sample_batch(pool, 16, rng, 1);
  REQUIRE(b1.size() == 16);
  CHECK(std::equal(b1.begin(), b1.end(), b2.begin()));
  CHECK(!std::equal(b1.begin(), b1.end(), b3.begin()));
  std::set<std::pair<int, int>> uniq;
  for (auto& r : b1) uniq.insert({r.episode, r.step});
  CHECK(uniq.size() == b1.size());
  CHECK_THROWS(harness::sample_batch(pool, int(pool.size()) + 1, rng, 0));
}

TEST_CASE("data: policy examples carry no frozen tokens and clamp the tail") {
  harness::RunConfig cfg = tiny_config();
  harness::LoadedDataset ds = harness::load_dataset(shared_dataset());
  policy::ActionNormalizer an = harness::fit_normalizer(ds);
  policy::ObsStats os = harness::fit_obs_stats(ds);

  // normalizer bounds are the dataset extrema
  for (int j = 0; j < world::kActionDim; ++j) {
    double lo = 1e300, hi = -1e300;
    for (const auto& ep : ds.episodes)
      for (const auto& st : ep.steps) {
        lo = std::min(lo, st.action[j]);
        hi = std::max(hi, st.action[j]);
      }
    CHECK(an.lo.at(0, j) == lo);
    CHECK(an.hi.at(0, j) == hi);
  }

  const world::Episode& ep = ds.episodes[1];
  int T = int(ep.steps.size());
  policy::PolicyExample ex = harness::build_policy_example(cfg, ep, T - 2, an, os);
  CHECK(ex.obs.frozen_img.numel() == 0);  // pretraining path has no such tokens
  CHECK(ex.obs.frozen_act.numel() == 0);
  CHECK(ex.a0.shape[0] == cfg.chunk);
  for (double v : ex.a0.data) {
    CHECK(v <= 1.0);
    CHECK(v >= -1.0);
  }
  // rows past the end repeat the final action
  Tensor64 last({1, world::kActionDim});
  for (int j = 0; j < world::kActionDim; ++j) last.at(0, j) = ep.steps.back().action[j];
  Tensor64 last_n = an.normalize(last);
  for (int i = 1; i < cfg.chunk; ++i)
    for (int j = 0; j < world::kActionDim; ++j) CHECK(ex.a0.at(i, j) == last_n.at(0, j));
}

TEST_CASE("selection: multiples of ten, novel first-object cells, extension") {
  harness::LoadedDataset empty;
  CHECK(harness::select_validation(empty).items.empty());

  harness::LoadedDataset ds = harness::load_dataset(shared_dataset());
  harness::EvalSelection sel = harness::select_validation(ds);
  REQUIRE(!sel.items.empty());
  CHECK(sel.strict_count == int(sel.items.size()));
  // rule (1): 1-based step index is a multiple of 10 (step 7 is excluded,
  // step 20 is a candidate)
  for (auto& r : sel.items) CHECK((r.step + 1) % 10 == 0);
  // rule (2): the first object's cell is novel per task
  std::set<std::pair<std::string, int>> cells;
  for (auto& r : sel.items) {
    int cell = harness::first_object_cell(ds.episodes[r.episode], r.step);
    CHECK(cell >= 0);
    CHECK(cell < 9);
    CHECK(cells.insert({ds.episodes[r.episode].task, cell}).second);
  }

  // an episode whose first object sits in an already-seen cell adds nothing
  harness::LoadedDataset twice = ds;
  size_t base = twice.episodes.size();
  twice.episodes.push_back(twice.episodes[0]);
  harness::EvalSelection sel2 = harness::select_validation(twice);
  for (auto& r : sel2.items) CHECK(r.episode < int(base));
  CHECK(sel2.items.size() == sel.items.size());

  // extension fills with remaining multiple-of-ten steps, in scan order
  harness::EvalSelection ext = sel;
  int target = int(ds.episodes.size()) * 3;  // all candidates
  harness::extend_selection(ds, ext, target);
  CHECK(int(ext.items.size()) == target);
  CHECK(ext.strict_count == sel.strict_count);
  std::set<std::pair<int, int>> uniq;
  for (auto& r : ext.items) {
    CHECK((r.step + 1) % 10 == 0);
    CHECK(uniq.insert({r.episode, r.step}).second);
  }
  harness::EvalSelection over = sel;
  CHECK_THROWS(harness::extend_selection(ds, over, target + 1));
}

TEST_CASE("artifacts: sidecar digests gate loading") {
  harness::RunConfig cfg = tiny_config();
  std::string dir = tmp_dir("art");
  core::ParamStore64 ps = harness::build_encoder_store(cfg, 5);
  harness::save_artifact(ps, cfg, "encoders", 123, dir + "/e.ckpt");

  core::ParamStore64 ps2 = harness::build_encoder_store(cfg, 6);
  harness::ArtifactInfo info = harness::load_artifact_into(ps2, cfg, "encoders", dir + "/e.ckpt");
  CHECK(info.step == 123);
  CHECK(info.config_hash == harness::config_hash(cfg));
  for (const auto& name : ps.names())
    CHECK(ps.get(name).data == ps2.get(name).data);

  // wrong kind
  CHECK_THROWS(harness::load_artifact_into(ps2, cfg, "policy", dir + "/e.ckpt"));
  // architecture mismatch
  harness::RunConfig wider = cfg;
  wider.embed = 32;
  core::ParamStore64 ps3 = harness::build_encoder_store(wider, 7);
  CHECK_THROWS(harness::load_artifact_into(ps3, wider, "encoders", dir + "/e.ckpt"));

  // policy artifacts carry normalizer statistics exactly
  harness::LoadedDataset ds = harness::load_dataset(shared_dataset());
  policy::ActionNormalizer an = harness::fit_normalizer(ds);
  policy::ObsStats os = harness::fit_obs_stats(ds);
  core::ParamStore64 pol = harness::build_policy_store(cfg, 8);
  harness::save_artifact(pol, cfg, "policy", 9, dir + "/p.ckpt", &an, &os);
  core::ParamStore64 pol2 = harness::build_policy_store(cfg, 9);
  harness::ArtifactInfo pinfo = harness::load_artifact_into(pol2, cfg, "policy", dir + "/p.ckpt");
  REQUIRE(pinfo.has_policy_aux);
  CHECK(pinfo.an.lo.data == an.lo.data);
  CHECK(pinfo.an.hi.data == an.hi.data);
  CHECK(pinfo.os.proprio_mean.data == os.proprio_mean.data);
  CHECK(pinfo.os.rgb_std == os.rgb_std);
}

TEST_CASE("pretrain: fixture-batch loss matches the init expectation oracle") {
  // random unit embeddings at the published init (t=10, b=-10)
  int B = 128, d = 32;
  core::CounterRng rng(21);
  auto draw = [&](const char* s) {
    Tensor64 M({B, d});
    for (int i = 0; i < B; ++i) {
      double n2 = 0;
      for (int j = 0; j < d; ++j) {
        double v = rng.normal(s, uint64_t(i) * d + j);
        M.at(i, j) = v;
        n2 += v * v;
      }
      for (int j = 0; j < d; ++j) M.at(i, j) /= std::sqrt(n2);
    }
    return M;
  };
  Tensor64 X = draw("x"), Y = draw("y"), Z = draw("z");
  contrastive::TempBias tb;  // init values
  double loss = contrastive::tri_modal_loss(X, Y, Z, tb);
  double oracle = mean_dot_expectation(d, B, tb);
  // three averaged pair losses tighten the Monte-Carlo error; the diagonal
  // terms dominate the spread (sigma ~ t/sqrt(dB))
  CHECK(loss == doctest::Approx(oracle).epsilon(0.08));
}

TEST_CASE("pretrain: loss decreases, checkpoint reload reproduces the loss exactly") {
  harness::RunConfig cfg = tiny_config();
  cfg.dataset = shared_dataset();
  cfg.out = tmp_dir("pre1");
  cfg.steps = 24;
  harness::PretrainResult r = harness::pretrain_encoders(cfg);
  CHECK(r.last_loss < r.first_loss);

  // reload and reproduce a fixed-batch loss bit-for-bit
  harness::LoadedDataset ds = harness::load_dataset(cfg.dataset);
  std::vector<harness::ExampleRef> refs;
  for (int i = 0; i < cfg.batch; ++i) refs.push_back({i % int(ds.episodes.size()), 3 + i});
  harness::TripletBatch fixed = harness::build_triplets(cfg, ds, refs);

  core::ParamStore64 trained = harness::build_encoder_store(cfg, cfg.seed);
  harness::load_artifact_into(trained, cfg, "encoders", r.checkpoint);
  double l1 = harness::triplet_batch_loss(trained, cfg, fixed);
  core::ParamStore64 again = harness::build_encoder_store(cfg, 999);
  harness::load_artifact_into(again, cfg, "encoders", r.checkpoint);
  double l2 = harness::triplet_batch_loss(again, cfg, fixed);
  CHECK(l1 == l2);

  // byte-reproducible logs and artifacts under a fixed seed
  harness::RunConfig cfg2 = cfg;
  cfg2.out = tmp_dir("pre2");
  harness::PretrainResult r2 = harness::pretrain_encoders(cfg2);
  CHECK(r2.last_loss == r.last_loss);
  CHECK(same_file_bytes(r.log_csv, r2.log_csv));
  CHECK(same_file_bytes(r.checkpoint, r2.checkpoint));
}

TEST_CASE("pretrain: interleaved policy steps share the data iterator") {
  harness::RunConfig cfg = tiny_config();
  cfg.dataset = shared_dataset();
  cfg.out = tmp_dir("inter");
  cfg.steps = 4;
  cfg.interleave_policy = true;
  harness::PretrainResult r = harness::pretrain_encoders(cfg);
  REQUIRE(!r.policy_checkpoint.empty());
  std::ifstream log(r.log_csv);
  std::string header;
  std::getline(log, header);
  CHECK(header == "step,lr,loss,policy_loss");
  core::ParamStore64 pol = harness::build_policy_store(cfg, 1);
  harness::ArtifactInfo info = harness::load_artifact_into(pol, cfg, "policy", r.policy_checkpoint);
  CHECK(info.has_policy_aux);
}

TEST_CASE("policy pretraining: deterministic, loss trends down") {
  harness::RunConfig cfg = tiny_config();
  cfg.dataset = shared_dataset();
  cfg.val_dataset = shared_val_dataset();
  cfg.out = tmp_dir("pol1");
  cfg.steps = 40;
  cfg.eval_every = 20;
  harness::PolicyTrainResult a = harness::pretrain_policy(cfg);
  REQUIRE(a.val_curve.size() == 2);

  harness::RunConfig cfg2 = cfg;
  cfg2.out = tmp_dir("pol2");
  harness::PolicyTrainResult b = harness::pretrain_policy(cfg2);
  CHECK(a.first_loss == b.first_loss);
  CHECK(a.last_loss == b.last_loss);
  CHECK(same_file_bytes(a.checkpoint, b.checkpoint));
  CHECK(same_file_bytes(a.log_csv, b.log_csv));

  // denoising MSE drops from its ~1.0 start on this tiny run
  CHECK(a.last_loss < a.first_loss);
  CHECK(a.val_curve.back().second < 1.0);
}

TEST_CASE("finetune: bit-exact warm start, frozen encoders, digest gate") {
  harness::RunConfig cfg = tiny_config();
  cfg.dataset = shared_dataset();
  cfg.val_dataset = shared_val_dataset();
  cfg.out = tmp_dir("ft_base");
  cfg.steps = 6;
  cfg.eval_every = 3;

  harness::PretrainResult enc = harness::pretrain_encoders(cfg);
  harness::PolicyTrainResult pol = harness::pretrain_policy(cfg);

  harness::RunConfig ft_cfg = cfg;
  ft_cfg.out = tmp_dir("ft_run");
  harness::PolicyTrainResult ft = harness::finetune_policy(ft_cfg, enc.checkpoint, pol.checkpoint);
  // step-0 parameters re-serialize to the very bytes of the pretraining
  // checkpoint
  CHECK(same_file_bytes(pol.checkpoint, ft_cfg.out + "/finetune_step0.ckpt"));
  CHECK(!ft.val_curve.empty());

  // a mismatched architecture is refused
  harness::RunConfig wrong = ft_cfg;
  wrong.pol_width = 32;
  CHECK_THROWS(harness::finetune_policy(wrong, enc.checkpoint, pol.checkpoint));
  // encoder checkpoints do not load as policies
  CHECK_THROWS(harness::finetune_policy(ft_cfg, pol.checkpoint, pol.checkpoint));

  // frozen towers: with the encoders inside the loss graph and marked
  // non-trainable, their parameter gradients are exactly zero rows
  core::ParamStore64 both(cfg.seed);
  enc::add_encoder_params(both, cfg.encoder_config());
  contrastive::add_temp_bias_params(both, "tb");
  policy::add_policy_params(both, cfg.policy_config());
  core::load_checkpoint_into(both, enc.checkpoint);
  for (const char* p : {"img", "act", "txt"}) both.set_trainable_prefix(p, false);

  harness::LoadedDataset ds = harness::load_dataset(cfg.dataset);
  policy::ActionNormalizer an = harness::fit_normalizer(ds);
  policy::ObsStats os = harness::fit_obs_stats(ds);
  policy::PolicyExample ex = harness::build_policy_example(cfg, ds.episodes[0], 5, an, os);
  geom::MultiViewObservation mvo = harness::build_observation(cfg, ds.episodes[0], 5);
  enc::ActionHistory hist = harness::build_history(cfg, ds.episodes[0], 5);

  policy::PolicyConfig pcfg = cfg.policy_config();
  core::Graph64 g(&both);
  enc::EncodeOut img = enc::image_encode_graph(g, cfg.encoder_config(), "img", mvo);
  enc::EncodeOut act = enc::action_encode_graph(g, cfg.encoder_config(), "act", hist);
  policy::PolicyTokens toks;
  for (const auto& cam : ex.obs.rgb) toks.rgb.push_back(g.input(cam));
  toks.proprio = g.input(ex.obs.proprio);
  toks.frozen_img = img.tokens;
  toks.frozen_act = act.tokens;
  Tensor64 noised(ex.a0.shape);
  for (int64_t i = 0; i < noised.numel(); ++i)
    noised.data[i] = core::CounterRng(5).normal("n", uint64_t(i));
  core::Id eps_hat = policy::policy_noise_graph(g, pcfg, toks, g.input(noised), 3);
  core::Id loss = g.mse(eps_hat, g.input(Tensor64(ex.a0.shape)));
  g.backward(loss);
  auto grads = g.param_gradients();
  int enc_params = 0;
  bool enc_all_zero = true, policy_some_nonzero = false;
  for (auto& [name, grad] : grads) {
    bool is_enc = name.rfind("img.", 0) == 0 || name.rfind("act.", 0) == 0 ||
                  name.rfind("txt.", 0) == 0;
    double mx = 0;
    for (double v : grad.data) mx = std::max(mx, std::abs(v));
    if (is_enc) {
      ++enc_params;
      enc_all_zero = enc_all_zero && mx == 0.0;
    } else if (name.rfind("pol.", 0) == 0) {
      policy_some_nonzero = policy_some_nonzero || mx > 0.0;
    }
  }
  CHECK(enc_params > 0);
  CHECK(enc_all_zero);
  CHECK(policy_some_nonzero);
}

TEST_CASE("retrieval: recall oracles") {
  contrastive::TempBias tb;
  core::CounterRng rng(77);
  auto draw = [&](const char* s, int n, int d) {
    Tensor64 M({n, d});
    for (int i = 0; i < n; ++i) {
      double n2 = 0;
      for (int j = 0; j < d; ++j) {
        double v = rng.normal(s, uint64_t(i) * d + j);
        M.at(i, j) = v;
        n2 += v * v;
      }
      for (int j = 0; j < d; ++j) M.at(i, j) /= std::sqrt(n2);
    }
    return M;
  };

  // identical embeddings: every direction retrieves its pair first
  Tensor64 E = draw("e", 24, 8);
  auto perfect = harness::recall_at_k(E, E, E, tb, false, 1);
  for (double r : perfect) CHECK(r == 1.0);

  // independent random embeddings: recall@5 sits at chance within 3 sigma
  int n = 100;
  Tensor64 X = draw("x", n, 16), Y = draw("y", n, 16), Z = draw("z", n, 16);
  auto chance = harness::recall_at_k(X, Y, Z, tb, false, 5);
  double p = 5.0 / n, band = 3.0 * std::sqrt(p * (1 - p) / n);
  for (double r : chance) {
    CHECK(r >= std::max(0.0, p - band));
    CHECK(r <= p + band);
  }
}

TEST_CASE("retrieval: report over a real selection") {
  harness::RunConfig cfg = tiny_config();
  harness::LoadedDataset ds = harness::load_dataset(shared_val_dataset());
  harness::EvalSelection sel = harness::select_validation(ds);
  harness::extend_selection(ds, sel, cfg.val_examples);
  REQUIRE(int(sel.items.size()) == cfg.val_examples);

  core::ParamStore64 ps = harness::build_encoder_store(cfg, 3);
  harness::RetrievalReport rep = harness::eval_retrieval(ps, cfg, ds, sel);
  CHECK(rep.n == cfg.val_examples);
  CHECK(rep.p_img_txt.shape == std::vector<int>{rep.n, rep.n});
  for (double v : rep.p_img_txt.data) {
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
  }
  for (size_t d = 0; d < 6; ++d) {
    CHECK(rep.recall1[d] >= 0.0);
    CHECK(rep.recall1[d] <= rep.recall5[d]);
    CHECK(rep.recall5[d] <= 1.0);
  }
  CHECK_THROWS(harness::eval_retrieval(ps, cfg, ds, harness::EvalSelection{}));
}

TEST_CASE("policy eval: oracle hits, trials honored, untrained stays at chance") {
  harness::PolicyEvalResult oracle = harness::eval_oracle("pick_place", 6, 4242);
  CHECK(oracle.trials == 6);
  CHECK(oracle.successes == 6);
  harness::PolicyEvalResult oracle2 = harness::eval_oracle("drawer_slide", 5, 977);
  CHECK(oracle2.successes == 5);

  harness::RunConfig cfg = tiny_config();
  harness::LoadedDataset ds = harness::load_dataset(shared_dataset());
  policy::ActionNormalizer an = harness::fit_normalizer(ds);
  policy::ObsStats os = harness::fit_obs_stats(ds);
  core::ParamStore64 pol = harness::build_policy_store(cfg, 17);
  harness::PolicyEvalResult rnd =
      harness::eval_policy(pol, cfg, "pick_place", 50, 31000, an, os, nullptr, 24);
  CHECK(rnd.trials == 50);
  CHECK(int(rnd.success.size()) == 50);
  CHECK(rnd.successes <= 2);  // 2-cm placements do not happen by luck
}

TEST_CASE("ablations: string toggle changes exactly the attention subgraph") {
  harness::RunConfig on = tiny_config();
  harness::RunConfig off = on;
  off.use_string = false;
  CHECK(harness::arch_hash(on) != harness::arch_hash(off));

  core::ParamStore64 ps_on = harness::build_encoder_store(on, 4);
  core::ParamStore64 ps_off = harness::build_encoder_store(off, 4);
  bool on_has = false;
  for (const auto& n : ps_on.names()) on_has = on_has || n.find(".string.") != std::string::npos;
  CHECK(on_has);
  for (const auto& n : ps_off.names()) CHECK(n.find(".string.") == std::string::npos);

  // zero rotation frequencies reduce the encoded attention to plain QK^T:
  // the two stores then embed images identically (shared parameters draw
  // identical init values by name)
  for (const auto& n : ps_on.names())
    if (n.find(".string.") != std::string::npos)
      for (double& v : ps_on.get(n).data) v = 0.0;
  harness::LoadedDataset ds = harness::load_dataset(shared_val_dataset());
  geom::MultiViewObservation mvo = harness::build_observation(on, ds.episodes[0], 10);
  Tensor64 a = enc::encode_image(ps_on, on.encoder_config(), mvo);
  Tensor64 b = enc::encode_image(ps_off, off.encoder_config(), mvo);
  REQUIRE(a.shape == b.shape);
  for (int64_t i = 0; i < a.numel(); ++i) CHECK(a.data[i] == doctest::Approx(b.data[i]).epsilon(1e-12));
}
