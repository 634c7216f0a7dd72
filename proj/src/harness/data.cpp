// SPDX-License-Identifier: Apache-2.0
#include "clamp/harness/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <set>

#include "clamp/enc/tokenizer.hpp"
#include "clamp/geom/point_cloud.hpp"
#include "clamp/geom/render.hpp"
#include "clamp/world/robot.hpp"
#include "clamp/world/sensors.hpp"

namespace clamp::harness {

using core::Tensor64;

int64_t LoadedDataset::total_steps() const {
  int64_t n = 0;
  for (const auto& ep : episodes) n += static_cast<int64_t>(ep.steps.size());
  return n;
}

LoadedDataset load_dataset(const std::string& dir) {
  LoadedDataset ds;
  auto [manifest, eps] = world::read_dataset(dir);
  ds.manifest = std::move(manifest);
  ds.episodes = std::move(eps);
  if (ds.episodes.empty()) core::fail("dataset", "'" + dir + "' holds no episodes");
  return ds;
}

std::vector<ExampleRef> all_examples(const LoadedDataset& ds) {
  std::vector<ExampleRef> out;
  for (int e = 0; e < static_cast<int>(ds.episodes.size()); ++e)
    for (int t = 0; t < static_cast<int>(ds.episodes[e].steps.size()); ++t)
      out.push_back({e, t});
  return out;
}

std::vector<ExampleRef> sample_batch(const std::vector<ExampleRef>& pool, int batch,
                                     const core::CounterRng& rng, uint64_t step) {
  size_t n = pool.size();
  if (static_cast<size_t>(batch) > n)
    core::fail("sample_batch", "batch " + std::to_string(batch) + " exceeds pool " +
                                   std::to_string(n));
  // rejection over a fixed draw budget keeps the batch free of repeats (a
  // duplicate would mislabel a true match as a negative) while every draw
  // stays addressable by (step, j)
  uint64_t budget = 16 * static_cast<uint64_t>(batch);
  std::vector<ExampleRef> out;
  std::set<size_t> used;
  for (uint64_t j = 0; j < budget && out.size() < static_cast<size_t>(batch); ++j) {
    double u = rng.uniform("batch", step * budget + j);
    size_t idx = std::min(n - 1, static_cast<size_t>(u * static_cast<double>(n)));
    if (used.insert(idx).second) out.push_back(pool[idx]);
  }
  if (out.size() < static_cast<size_t>(batch))
    core::fail("sample_batch", "draw budget exhausted; pool too small for batch");
  return out;
}

namespace {

const world::EpisodeStep& step_at(const world::Episode& ep, int t) {
  if (t < 0 || t >= static_cast<int>(ep.steps.size()))
    core::fail("example", "step " + std::to_string(t) + " outside episode of length " +
                              std::to_string(ep.steps.size()));
  return ep.steps[static_cast<size_t>(t)];
}

}  // namespace

geom::MultiViewObservation observation_from_frames(const RunConfig& cfg,
                                                   const std::vector<Tensor64>& depths,
                                                   const Tensor64& proprio, int capture_res) {
  std::vector<geom::CameraModel> rig = world::external_cameras(capture_res);
  if (depths.size() != rig.size())
    core::fail("example", "got " + std::to_string(depths.size()) + " captures, expected " +
                              std::to_string(rig.size()));
  std::vector<geom::PointCloud> clouds;
  clouds.reserve(rig.size());
  for (size_t c = 0; c < rig.size(); ++c) clouds.push_back(geom::unproject(depths[c], rig[c]));
  geom::PointCloud cloud = geom::crop_aabb(geom::merge(clouds), geom::WorkspaceAABB{});
  cloud = geom::voxel_downsample(cloud, cfg.voxel);

  std::vector<geom::CameraModel> views;
  views.push_back(world::overhead_camera(cfg.views_res));
  for (const auto& cam : world::external_cameras(cfg.views_res)) views.push_back(cam);
  if (cfg.wrist_views) {
    world::RobotState robot = world::RobotState::from_joints(proprio);
    views.push_back(world::wrist_camera(robot.left.pose(), cfg.views_res));
    views.push_back(world::wrist_camera(robot.right.pose(), cfg.views_res));
  }
  std::vector<geom::DXYZImage> rendered;
  rendered.reserve(views.size());
  for (const auto& cam : views) rendered.push_back(geom::render_view(cloud, cam));
  return geom::tile_views(rendered);
}

geom::MultiViewObservation build_observation(const RunConfig& cfg, const world::Episode& ep,
                                             int t) {
  const world::EpisodeStep& st = step_at(ep, t);
  return observation_from_frames(cfg, st.depth, st.proprio, ep.width);
}

namespace {

enc::ActionHistory history_rows(int H, int count,
                                const std::function<const Tensor64&(int)>& row_at) {
  int A = world::kActionDim;
  enc::ActionHistory h;
  h.steps = Tensor64({H, A});
  h.mask.assign(static_cast<size_t>(H), 0);
  for (int i = 0; i < H; ++i) {
    int src = count - H + i;
    if (src < 0) continue;
    const Tensor64& a = row_at(src);
    for (int j = 0; j < A; ++j) h.steps.at(i, j) = a[j];
    h.mask[static_cast<size_t>(i)] = 1;
  }
  return h;
}

}  // namespace

enc::ActionHistory build_history(const RunConfig& cfg, const world::Episode& ep, int t) {
  step_at(ep, t);
  return history_rows(cfg.history, t, [&](int src) -> const Tensor64& {
    return ep.steps[static_cast<size_t>(src)].action;
  });
}

enc::ActionHistory history_from_actions(const RunConfig& cfg,
                                        const std::vector<Tensor64>& executed) {
  return history_rows(cfg.history, static_cast<int>(executed.size()),
                      [&](int src) -> const Tensor64& {
                        return executed[static_cast<size_t>(src)];
                      });
}

std::vector<int> build_text_ids(const RunConfig& cfg, const world::Episode& ep, int t) {
  const world::EpisodeStep& st = step_at(ep, t);
  std::vector<int> ids = enc::tokenize(st.text, cfg.text_tokens);
  if (!ids.empty() && ids.back() != enc::Vocab::kPad)
    core::fail("example", "text_tokens " + std::to_string(cfg.text_tokens) +
                              " cannot hold the step text without truncation");
  return ids;
}

TripletBatch build_triplets(const RunConfig& cfg, const LoadedDataset& ds,
                            const std::vector<ExampleRef>& refs) {
  TripletBatch b;
  b.refs = refs;
  for (const ExampleRef& r : refs) {
    const world::Episode& ep = ds.episodes.at(static_cast<size_t>(r.episode));
    b.obs.push_back(build_observation(cfg, ep, r.step));
    b.hist.push_back(build_history(cfg, ep, r.step));
    b.text.push_back(build_text_ids(cfg, ep, r.step));
  }
  return b;
}

policy::ActionNormalizer fit_normalizer(const LoadedDataset& ds) {
  std::vector<Tensor64> chunks;
  for (const auto& ep : ds.episodes)
    for (const auto& st : ep.steps) {
      Tensor64 row({1, static_cast<int>(st.action.numel())});
      for (int j = 0; j < row.shape[1]; ++j) row.at(0, j) = st.action[j];
      chunks.push_back(std::move(row));
    }
  return policy::ActionNormalizer::fit(chunks);
}

namespace {

policy::PolicyObservation raw_observation(const world::Episode& ep, int t) {
  const world::EpisodeStep& st = step_at(ep, t);
  policy::PolicyObservation o;
  o.rgb = st.rgb;
  o.proprio = Tensor64({1, static_cast<int>(st.proprio.numel())});
  for (int j = 0; j < o.proprio.shape[1]; ++j) o.proprio.at(0, j) = st.proprio[j];
  return o;
}

}  // namespace

policy::ObsStats fit_obs_stats(const LoadedDataset& ds) {
  std::vector<policy::PolicyObservation> all;
  for (const auto& ep : ds.episodes)
    for (int t = 0; t < static_cast<int>(ep.steps.size()); ++t)
      all.push_back(raw_observation(ep, t));
  return policy::ObsStats::fit(all);
}

policy::PolicyExample build_policy_example(const RunConfig& cfg, const world::Episode& ep, int t,
                                           const policy::ActionNormalizer& an,
                                           const policy::ObsStats& os) {
  step_at(ep, t);
  int A = world::kActionDim;
  Tensor64 a0({cfg.chunk, A});
  int last = static_cast<int>(ep.steps.size()) - 1;
  for (int i = 0; i < cfg.chunk; ++i) {
    const Tensor64& a = ep.steps[static_cast<size_t>(std::min(t + i, last))].action;
    for (int j = 0; j < A; ++j) a0.at(i, j) = a[j];
  }
  policy::PolicyExample ex;
  ex.obs = os.apply(raw_observation(ep, t));
  ex.a0 = an.normalize(a0);
  return ex;
}

FrozenTokens frozen_tokens_from(core::ParamStore64& enc_ps, const RunConfig& cfg,
                                const geom::MultiViewObservation& obs,
                                const enc::ActionHistory& hist) {
  enc::EncoderConfig ec = cfg.encoder_config();
  FrozenTokens out;
  enc::encode_image(enc_ps, ec, obs, &out.img);
  enc::encode_action(enc_ps, ec, hist, &out.act);
  return out;
}

FrozenTokens frozen_tokens(core::ParamStore64& enc_ps, const RunConfig& cfg,
                           const world::Episode& ep, int t) {
  return frozen_tokens_from(enc_ps, cfg, build_observation(cfg, ep, t),
                            build_history(cfg, ep, t));
}

int first_object_cell(const world::Episode& ep, int t) {
  const world::EpisodeStep& st = step_at(ep, t);
  size_t at = st.text.find(" at (");
  if (at == std::string::npos) return -1;
  double nx = 0, ny = 0, nz = 0;
  if (std::sscanf(st.text.c_str() + at, " at (%lf,%lf,%lf)", &nx, &ny, &nz) != 3)
    core::fail("selection", "unparsable object position in step text");
  auto axis_cell = [](double v) { return std::min(2, std::max(0, static_cast<int>(v * 3.0))); };
  return axis_cell(nx) * 3 + axis_cell(ny);
}

EvalSelection select_validation(const LoadedDataset& ds) {
  EvalSelection sel;
  std::set<std::pair<std::string, int>> seen;  // (task, cell)
  for (int e = 0; e < static_cast<int>(ds.episodes.size()); ++e) {
    const world::Episode& ep = ds.episodes[static_cast<size_t>(e)];
    for (int step1 = 10; step1 <= static_cast<int>(ep.steps.size()); step1 += 10) {
      int t = step1 - 1;
      int cell = first_object_cell(ep, t);
      if (cell < 0) continue;
      if (seen.insert({ep.task, cell}).second) sel.items.push_back({e, t});
    }
  }
  sel.strict_count = static_cast<int>(sel.items.size());
  return sel;
}

void extend_selection(const LoadedDataset& ds, EvalSelection& sel, int target) {
  if (static_cast<int>(sel.items.size()) >= target) {
    sel.items.resize(static_cast<size_t>(target));
    sel.strict_count = std::min(sel.strict_count, target);
    return;
  }
  std::set<std::pair<int, int>> have;
  for (const auto& r : sel.items) have.insert({r.episode, r.step});
  for (int e = 0; e < static_cast<int>(ds.episodes.size()); ++e) {
    const world::Episode& ep = ds.episodes[static_cast<size_t>(e)];
    for (int step1 = 10; step1 <= static_cast<int>(ep.steps.size()); step1 += 10) {
      int t = step1 - 1;
      if (static_cast<int>(sel.items.size()) >= target) return;
      if (have.insert({e, t}).second) sel.items.push_back({e, t});
    }
  }
  if (static_cast<int>(sel.items.size()) < target)
    core::fail("selection", "dataset supplies only " + std::to_string(sel.items.size()) +
                                " of " + std::to_string(target) + " validation examples");
}

}  // namespace clamp::harness
