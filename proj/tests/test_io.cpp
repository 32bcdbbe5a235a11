#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstring>
#include <filesystem>

#include "oracles.hpp"
#include "ugr/config.hpp"
#include "ugr/io.hpp"
#include "ugr/pipelines.hpp"

using namespace ugr;
using namespace ugr::testing;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() : path(fs::temp_directory_path() / ("ugr_io_" + std::to_string(::getpid()))) {
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

}  // namespace

TEST_CASE("volume files round-trip bit-exactly") {
  TempDir tmp;
  Volume v = synth_volume("roundtrip", 16, 0.05f, 3);
  const fs::path p = tmp.path / "roundtrip.json";
  save_volume(p, v);
  Volume w = load_volume(p);
  CHECK(w.id == v.id);
  CHECK(w.depth == v.depth);
  CHECK(std::memcmp(w.intensities.data(), v.intensities.data(),
                    sizeof(float) * v.intensities.size()) == 0);
  CHECK(w.labels == v.labels);

  // rewrite produces identical bytes
  save_volume(p, w);
  Volume x = load_volume(p);
  CHECK(std::memcmp(x.intensities.data(), v.intensities.data(),
                    sizeof(float) * v.intensities.size()) == 0);
}

TEST_CASE("volume payload size mismatch is a parse error") {
  TempDir tmp;
  Volume v = synth_volume("bad", 16, 0.05f, 4);
  const fs::path p = tmp.path / "bad.json";
  save_volume(p, v);
  // truncate the raw payload
  auto raw = read_file_bytes(tmp.path / "bad.raw");
  raw.resize(raw.size() - 10);
  atomic_write(tmp.path / "bad.raw", raw);
  CHECK_THROWS_AS(load_volume(p), Error);
}

TEST_CASE("checkpoint truncation reports offsets") {
  TempDir tmp;
  SegNetConfig cfg;
  cfg.levels = 1;
  cfg.base_channels = 2;
  SegNet net(cfg, 5);
  const fs::path p = tmp.path / "net.ckpt";
  save_segnet(p, net, 5, 1);
  auto bytes = read_file_bytes(p);
  for (size_t keep : {size_t{2}, size_t{9}, bytes.size() - 13}) {
    auto cut = bytes;
    cut.resize(keep);
    atomic_write(p, cut);
    try {
      load_segnet(p);
      FAIL("expected a parse error");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::parse_error);
    }
  }
}

TEST_CASE("manifest round-trips") {
  TempDir tmp;
  Manifest m;
  m.subcommand = "refine";
  m.config_hash = "0123456789abcdef";
  m.seed = 7;
  m.inputs["dataset"] = "aa";
  m.outputs["mask.raw"] = "bb";
  const fs::path artifact = tmp.path / "mask.raw";
  atomic_write(artifact, std::string("payload"));
  write_manifest(artifact, m);
  Manifest r = read_manifest(artifact);
  CHECK(r.subcommand == "refine");
  CHECK(r.config_hash == m.config_hash);
  CHECK(r.seed == 7);
  CHECK(r.inputs == m.inputs);
  CHECK(r.outputs == m.outputs);
  CHECK_THROWS_AS(read_manifest(tmp.path / "absent.raw"), Error);
}

TEST_CASE("png encoding is deterministic and well-formed") {
  TempDir tmp;
  Rng rng(9);
  std::vector<uint8_t> rgb(32 * 16 * 3);
  for (auto& v : rgb) v = static_cast<uint8_t>(rng.uniform_int(256));
  const fs::path a = tmp.path / "a.png";
  const fs::path b = tmp.path / "b.png";
  write_rgb_png(a, 32, 16, rgb);
  write_rgb_png(b, 32, 16, rgb);
  const auto ba = read_file_bytes(a);
  CHECK(ba == read_file_bytes(b));
  REQUIRE(ba.size() > 33);
  const uint8_t sig[8] = {0x89, 0x50, 0x4e, 0x47, 0x0d, 0x0a, 0x1a, 0x0a};
  CHECK(std::memcmp(ba.data(), sig, 8) == 0);
  // width is stored big-endian at offset 16
  CHECK(ba[16] == 0);
  CHECK(ba[19] == 32);
}

TEST_CASE("run config defaults, round-trip, and hash stability") {
  RunConfig def = RunConfig::from_json_text("{}");
  CHECK(def.experiment.gcn_lr == doctest::Approx(1e-2f));
  CHECK(def.experiment.unet_lr == doctest::Approx(1e-5f));
  CHECK(def.experiment.mcdo_passes == 10);
  CHECK(def.experiment.tau == doctest::Approx(0.05f));
  CHECK(def.synth.n_train == 20);
  CHECK(def.matrix_experiments.size() == 6);

  RunConfig again = RunConfig::from_json_text(def.canonical_json());
  CHECK(again.config_hash() == def.config_hash());
  CHECK(again.canonical_json() == def.canonical_json());

  RunConfig tweaked = def;
  tweaked.experiment.tau = 0.08f;
  CHECK(tweaked.config_hash() != def.config_hash());
}

TEST_CASE("unknown config keys are rejected") {
  CHECK_THROWS_AS(RunConfig::from_json_text(R"({"sed": 3})"), Error);
  CHECK_THROWS_AS(RunConfig::from_json_text(R"({"experiment": {"taau": 0.1}})"), Error);
  try {
    RunConfig::from_json_text(R"({"experiment": {"taau": 0.1}})");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::parse_error);
    CHECK(std::string(e.what()).find("taau") != std::string::npos);
  }
}

TEST_CASE("config validation rejects bad values") {
  CHECK_THROWS_AS(RunConfig::from_json_text(R"({"experiment": {"gcn_lr": 0.0}})"), Error);
  CHECK_THROWS_AS(RunConfig::from_json_text(R"({"synth": {"dim": 60}})"), Error);  // not /8
  CHECK_THROWS_AS(RunConfig::from_json_text(R"({"experiment": {"experiment": "nope"}})"), Error);
  CHECK_THROWS_AS(RunConfig::from_json_text("{"), Error);
}

TEST_CASE("large random graphs round-trip bit-exactly") {
  Rng rng(11);
  RefinementGraph g;
  g.volume_id = "big";
  const int64_t n = 10000;
  for (int64_t i = 0; i < n; ++i) {
    GraphNode node;
    node.i = static_cast<int32_t>(rng.uniform_int(64));
    node.j = static_cast<int32_t>(rng.uniform_int(64));
    node.k = static_cast<int32_t>(rng.uniform_int(64));
    node.e_fg = rng.uniform_f();
    node.u = rng.uniform_f();
    node.v = rng.uniform_f();
    node.role = rng.uniform_f() < 0.5f ? NodeRole::certain : NodeRole::uncertain;
    node.label = static_cast<int8_t>(rng.uniform_int(3) - 1);
    g.nodes.push_back(node);
  }
  for (int64_t e = 0; e < 60000; ++e) {
    GraphEdge edge;
    edge.src = static_cast<uint32_t>(rng.uniform_int(n));
    edge.dst = static_cast<uint32_t>(rng.uniform_int(n));
    edge.w = rng.uniform_f();
    edge.kind = static_cast<EdgeKind>(rng.uniform_int(4));
    g.edges.push_back(edge);
  }
  const auto bin = graph_to_binary(g);
  RefinementGraph h = graph_from_binary(bin);
  CHECK(graph_to_binary(h) == bin);
  const std::string js = graph_to_json(g);
  RefinementGraph k = graph_from_json(js);
  CHECK(graph_to_json(k) == js);
  CHECK(graph_to_binary(k) == bin);

  // empty-edge graph round-trips too
  RefinementGraph empty;
  empty.volume_id = "empty";
  GraphNode lone;
  empty.nodes.push_back(lone);
  const auto ebin = graph_to_binary(empty);
  CHECK(graph_to_binary(graph_from_binary(ebin)) == ebin);
}
