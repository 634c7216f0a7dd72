// SPDX-License-Identifier: Apache-2.0
#include "clamp/world/dataset.hpp"

#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "clamp/core/rng.hpp"

namespace clamp::world {

namespace {

static_assert(std::endian::native == std::endian::little,
              "episode files are little-endian; big-endian hosts need a byte swap pass");

constexpr char kMagic[8] = {'C', 'L', 'A', 'M', 'P', 'E', 'P', '1'};
constexpr uint8_t kTagU64 = 1, kTagI64 = 2, kTagStr = 3, kTagTensor = 4;

// ---- writing ----
void put_raw(std::string& buf, const void* p, size_t n) {
  buf.append(static_cast<const char*>(p), n);
}
template <class T>
void put_pod(std::string& buf, T v) {
  put_raw(buf, &v, sizeof(T));
}
void put_name(std::string& buf, uint8_t tag, const std::string& name) {
  put_pod(buf, tag);
  put_pod(buf, static_cast<uint16_t>(name.size()));
  put_raw(buf, name.data(), name.size());
}
void put_u64(std::string& buf, const std::string& name, uint64_t v) {
  put_name(buf, kTagU64, name);
  put_pod(buf, v);
}
void put_i64(std::string& buf, const std::string& name, int64_t v) {
  put_name(buf, kTagI64, name);
  put_pod(buf, v);
}
void put_str(std::string& buf, const std::string& name, const std::string& s) {
  put_name(buf, kTagStr, name);
  put_pod(buf, static_cast<uint32_t>(s.size()));
  put_raw(buf, s.data(), s.size());
}
void put_tensor(std::string& buf, const std::string& name, const core::Tensor64& t) {
  put_name(buf, kTagTensor, name);
  put_pod(buf, static_cast<uint8_t>(t.rank()));
  for (int d : t.shape) put_pod(buf, static_cast<uint32_t>(d));
  put_raw(buf, t.data.data(), t.data.size() * sizeof(double));
}

// ---- reading ----
struct Cursor {
  const std::string& buf;
  size_t pos = 0;

  void need(size_t n) const {
    if (pos + n > buf.size()) core::fail("dataset", "episode file truncated");
  }
  void raw(void* p, size_t n) {
    need(n);
    std::memcpy(p, buf.data() + pos, n);
    pos += n;
  }
  template <class T>
  T pod() {
    T v;
    raw(&v, sizeof(T));
    return v;
  }
  void expect(uint8_t tag, const std::string& name) {
    uint8_t t = pod<uint8_t>();
    uint16_t n = pod<uint16_t>();
    need(n);
    std::string got(buf.data() + pos, n);
    pos += n;
    if (t != tag || got != name)
      core::fail("dataset", "unexpected record '" + got + "' where '" + name + "' belongs");
  }
  uint64_t u64(const std::string& name) {
    expect(kTagU64, name);
    return pod<uint64_t>();
  }
  int64_t i64(const std::string& name) {
    expect(kTagI64, name);
    return pod<int64_t>();
  }
  std::string str(const std::string& name) {
    expect(kTagStr, name);
    uint32_t n = pod<uint32_t>();
    need(n);
    std::string s(buf.data() + pos, n);
    pos += n;
    return s;
  }
  core::Tensor64 tensor(const std::string& name) {
    expect(kTagTensor, name);
    uint8_t rank = pod<uint8_t>();
    std::vector<int> shape;
    int64_t n = 1;
    for (int i = 0; i < rank; ++i) {
      uint32_t d = pod<uint32_t>();
      shape.push_back(static_cast<int>(d));
      n *= d;
    }
    core::Tensor64 t(shape);
    raw(t.data.data(), static_cast<size_t>(n) * sizeof(double));
    return t;
  }
};

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) core::fail("dataset", "cannot open '" + path + "'");
  std::string buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return buf;
}

}  // namespace

void write_episode(const Episode& ep, const std::string& path) {
  std::string buf;
  put_raw(buf, kMagic, sizeof(kMagic));
  put_str(buf, "task", ep.task);
  put_u64(buf, "seed", ep.seed);
  put_i64(buf, "success", ep.success ? 1 : 0);
  put_i64(buf, "height", ep.height);
  put_i64(buf, "width", ep.width);
  put_i64(buf, "n_steps", static_cast<int64_t>(ep.steps.size()));
  put_i64(buf, "n_cams", ep.steps.empty() ? 0 : static_cast<int64_t>(ep.steps[0].depth.size()));
  for (size_t i = 0; i < ep.steps.size(); ++i) {
    const EpisodeStep& st = ep.steps[i];
    std::string p = "s" + std::to_string(i) + ".";
    for (size_t c = 0; c < st.depth.size(); ++c)
      put_tensor(buf, p + "depth" + std::to_string(c), st.depth[c]);
    for (size_t c = 0; c < st.rgb.size(); ++c)
      put_tensor(buf, p + "rgb" + std::to_string(c), st.rgb[c]);
    put_tensor(buf, p + "proprio", st.proprio);
    put_tensor(buf, p + "action", st.action);
    put_str(buf, p + "text", st.text);
    put_i64(buf, p + "progress", st.progress);
  }
  uint64_t sum = core::fnv1a64(std::string_view(buf.data(), buf.size()));
  put_pod(buf, sum);

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) core::fail("dataset", "cannot write '" + path + "'");
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!out) core::fail("dataset", "short write to '" + path + "'");
}

Episode read_episode(const std::string& path) {
  std::string buf = slurp(path);
  if (buf.size() < sizeof(kMagic) + 8) core::fail("dataset", "episode file truncated");
  if (std::memcmp(buf.data(), kMagic, 7) != 0)
    core::fail("dataset", "'" + path + "' is not an episode file");
  if (buf[7] != kMagic[7]) core::fail("dataset", "episode format version mismatch");
  uint64_t stored;
  std::memcpy(&stored, buf.data() + buf.size() - 8, 8);
  uint64_t sum = core::fnv1a64(std::string_view(buf.data(), buf.size() - 8));
  if (stored != sum) core::fail("dataset", "checksum mismatch in '" + path + "'");

  Cursor c{buf, sizeof(kMagic)};
  Episode ep;
  ep.task = c.str("task");
  ep.seed = c.u64("seed");
  ep.success = c.i64("success") != 0;
  ep.height = static_cast<int>(c.i64("height"));
  ep.width = static_cast<int>(c.i64("width"));
  int64_t n_steps = c.i64("n_steps");
  int64_t n_cams = c.i64("n_cams");
  for (int64_t i = 0; i < n_steps; ++i) {
    EpisodeStep st;
    std::string p = "s" + std::to_string(i) + ".";
    for (int64_t k = 0; k < n_cams; ++k) st.depth.push_back(c.tensor(p + "depth" + std::to_string(k)));
    for (int64_t k = 0; k < n_cams; ++k) st.rgb.push_back(c.tensor(p + "rgb" + std::to_string(k)));
    st.proprio = c.tensor(p + "proprio");
    st.action = c.tensor(p + "action");
    st.text = c.str(p + "text");
    st.progress = static_cast<int>(c.i64(p + "progress"));
    ep.steps.push_back(std::move(st));
  }
  if (c.pos != buf.size() - 8) core::fail("dataset", "trailing bytes in '" + path + "'");
  return ep;
}

DatasetManifest write_dataset(const std::vector<Episode>& episodes, const std::string& dir,
                              uint64_t config_hash) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  DatasetManifest m;
  m.config_hash = config_hash;
  nlohmann::json idx = nlohmann::json::array();
  for (size_t i = 0; i < episodes.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof(name), "ep_%05zu.bin", i);
    write_episode(episodes[i], (fs::path(dir) / name).string());
    ManifestEntry e{episodes[i].task, episodes[i].seed, name,
                    static_cast<int>(episodes[i].steps.size()), episodes[i].success};
    idx.push_back({{"task", e.task},
                   {"seed", e.seed},
                   {"path", e.path},
                   {"length", e.length},
                   {"success", e.success}});
    m.episodes.push_back(std::move(e));
  }
  nlohmann::json j{{"version", m.version},
                   {"config_hash", std::to_string(config_hash)},
                   {"episodes", idx}};
  std::ofstream out(fs::path(dir) / "manifest.json");
  if (!out) core::fail("dataset", "cannot write manifest under '" + dir + "'");
  out << j.dump(2) << "\n";
  return m;
}

DatasetManifest read_manifest(const std::string& dir) {
  namespace fs = std::filesystem;
  std::string raw = slurp((fs::path(dir) / "manifest.json").string());
  nlohmann::json j = nlohmann::json::parse(raw, nullptr, false);
  if (j.is_discarded()) core::fail("dataset", "manifest.json is not valid JSON");
  DatasetManifest m;
  if (!j.contains("version") || !j["version"].is_number_integer() || j["version"] != 1)
    core::fail("dataset", "manifest version mismatch");
  m.config_hash = std::stoull(j.at("config_hash").get<std::string>());
  for (const auto& e : j.at("episodes")) {
    ManifestEntry me;
    me.task = e.at("task").get<std::string>();
    me.seed = e.at("seed").get<uint64_t>();
    me.path = e.at("path").get<std::string>();
    me.length = e.at("length").get<int>();
    me.success = e.at("success").get<bool>();
    m.episodes.push_back(std::move(me));
  }
  return m;
}

std::pair<DatasetManifest, std::vector<Episode>> read_dataset(const std::string& dir) {
  namespace fs = std::filesystem;
  DatasetManifest m = read_manifest(dir);
  std::vector<Episode> eps;
  for (const auto& e : m.episodes) {
    Episode ep = read_episode((fs::path(dir) / e.path).string());
    if (static_cast<int>(ep.steps.size()) != e.length)
      core::fail("dataset", "episode '" + e.path + "' length disagrees with the manifest");
    eps.push_back(std::move(ep));
  }
  return {std::move(m), std::move(eps)};
}

}  // namespace clamp::world
