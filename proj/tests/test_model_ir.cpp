#include <doctest.h>

#include <numeric>

#include "helpers.hpp"
#include "swapsched/model_ir.hpp"
#include "swapsched/synthetic.hpp"

using namespace swapsched;
using swapsched::testing::GmapBuilder;
using swapsched::testing::tiny_network;

namespace {

const char* kThreeLayerJson = R"({
  "format_version": 1,
  "name": "demo",
  "k_base": 32,
  "backward_flops_factor": 2.0,
  "layers": [
    {"index": 1, "layer_type": "conv", "flops_fwd_base": 10000000000,
     "featuremap_bytes_base": 1048576, "param_bytes": 4096,
     "grad_bytes": 4096, "workspace_bytes_base": 2048},
    {"index": 2, "layer_type": "bn", "flops_fwd_base": 1000000,
     "flops_bwd_base": 1500000,
     "featuremap_bytes_base": 1048576, "param_bytes": 0,
     "grad_bytes": 0, "workspace_bytes_base": 0},
    {"index": 3, "layer_type": "fc", "flops_fwd_base": 500000000,
     "featuremap_bytes_base": 524288, "param_bytes": 1048576,
     "grad_bytes": 1048576, "workspace_bytes_base": 512}
  ]
})";

}  // namespace

TEST_CASE("parse_network_spec accepts a valid document") {
  NetworkSpec net = parse_network_spec_json(kThreeLayerJson, "inline");
  CHECK(net.num_layers == 3);
  CHECK(net.k_base == 32);
  CHECK(net.layer(2).flops_bwd_base.value() == 1'500'000);
  // missing backward FLOPs filled as factor * forward
  CHECK(net.layer(1).flops_bwd_base.value() == 20'000'000'000ull);
}

TEST_CASE("parse_network_spec rejects duplicate layer indices") {
  std::string doc = kThreeLayerJson;
  auto pos = doc.find("\"index\": 3");
  doc.replace(pos, 10, "\"index\": 2");
  CHECK_THROWS_AS(parse_network_spec_json(doc, "inline"), SpecError);
}

TEST_CASE("parse_network_spec rejects nonpositive FLOPs and bad types") {
  std::string doc = kThreeLayerJson;
  auto pos = doc.find("\"flops_fwd_base\": 1000000,");
  doc.replace(pos, 26, "\"flops_fwd_base\": 0,");
  CHECK_THROWS_AS(parse_network_spec_json(doc, "inline"), SpecError);

  std::string doc2 = kThreeLayerJson;
  pos = doc2.find("\"layer_type\": \"bn\"");
  doc2.replace(pos, 18, "\"layer_type\": \"lstm\"");
  CHECK_THROWS_AS(parse_network_spec_json(doc2, "inline"), SpecError);

  // "other" is fine once tagged
  std::string doc3 = kThreeLayerJson;
  pos = doc3.find("\"layer_type\": \"bn\"");
  doc3.replace(pos, 18, "\"layer_type\": \"other\", \"type_tag\": \"lstm\"");
  NetworkSpec net = parse_network_spec_json(doc3, "inline");
  CHECK(net.layer(2).type_key() == "lstm");
}

TEST_CASE("network spec round-trips through its JSON form") {
  NetworkSpec net = parse_network_spec_json(kThreeLayerJson, "inline");
  NetworkSpec again = parse_network_spec_json(network_spec_to_json(net), "again");
  CHECK(again.num_layers == net.num_layers);
  CHECK(again.layer(3).param_bytes == net.layer(3).param_bytes);
  CHECK(network_spec_to_json(again) == network_spec_to_json(net));
}

TEST_CASE("unfold_network produces forward then reversed backward phases") {
  NetworkSpec net = tiny_network(3);
  auto phases = unfold_network(net);
  REQUIRE(phases.size() == 6);
  const int expect_layer[] = {1, 2, 3, 3, 2, 1};
  for (int j = 0; j < 6; ++j) {
    CHECK(phases[j].phase_index == j + 1);
    CHECK(phases[j].source_layer == expect_layer[j]);
    CHECK(phases[j].direction ==
          (j < 3 ? Direction::forward : Direction::backward));
  }
  // phase 5 of N=3 maps to layer 2N+1-j = 2
  CHECK(phases[4].source_layer == 2);

  auto single = unfold_network(tiny_network(1));
  REQUIRE(single.size() == 2);
  CHECK(single[0].direction == Direction::forward);
  CHECK(single[1].direction == Direction::backward);
}

TEST_CASE("build_gmap emits the canonical op order for one layer") {
  NetworkSpec net = tiny_network(1);
  Gmap g = build_gmap(unfold_network(net), net);
  REQUIRE(g.ops.size() == 8);
  auto kind_of = [&](size_t i) { return g.ops[i].kind; };
  auto name_of = [&](size_t i) { return g.object(g.ops[i].object).name; };

  CHECK(kind_of(0) == MemOpKind::allocate);
  CHECK(name_of(0) == "ws_f1");
  CHECK(kind_of(1) == MemOpKind::allocate);
  CHECK(name_of(1) == "fm1");
  CHECK(kind_of(2) == MemOpKind::offload);
  CHECK(name_of(2) == "fm1");
  CHECK(kind_of(3) == MemOpKind::release);
  CHECK(name_of(3) == "ws_f1");
  CHECK(kind_of(4) == MemOpKind::prefetch);
  CHECK(name_of(4) == "fm1");
  CHECK(kind_of(5) == MemOpKind::allocate);
  CHECK(name_of(5) == "ws_b1");
  CHECK(kind_of(6) == MemOpKind::release);
  CHECK(name_of(6) == "fm1");
  CHECK(kind_of(7) == MemOpKind::release);
  CHECK(name_of(7) == "ws_b1");
}

TEST_CASE("every featuremap gets an offload/prefetch pair") {
  // conv-bn-activation unit: produced and consumed close together, still
  // swapped unless pinned
  NetworkSpec net = tiny_network(3);
  net.layers[0].layer_type = LayerType::conv;
  net.layers[1].layer_type = LayerType::bn;
  net.layers[2].layer_type = LayerType::activation;
  Gmap g = build_gmap(unfold_network(net), net);
  int offloads = 0, prefetches = 0;
  for (const auto& op : g.ops) {
    offloads += op.kind == MemOpKind::offload;
    prefetches += op.kind == MemOpKind::prefetch;
  }
  CHECK(offloads == 3);
  CHECK(prefetches == 3);
  CHECK(validate_gmap(g).empty());
}

TEST_CASE("scale_size follows the minibatch ratio") {
  MemObject fm;
  fm.kind = ObjectKind::featuremap;
  fm.scales_with_minibatch = true;
  fm.size_base = 160ull << 20;  // 160 MiB
  CHECK(scale_size(fm, 64, 32) == 320ull << 20);

  MemObject param;
  param.kind = ObjectKind::param;
  param.scales_with_minibatch = false;
  param.size_base = 160ull << 20;
  CHECK(scale_size(param, 64, 32) == 160ull << 20);
  CHECK(scale_size(param, 1, 32) == 160ull << 20);

  fm.size_base = 100ull << 20;  // factor 1.5
  CHECK(scale_size(fm, 12, 8) == 150ull << 20);

  CHECK_THROWS_AS(scale_size(fm, 0, 8), std::invalid_argument);
}

TEST_CASE("scale_size rounds up to the alignment granule") {
  MemObject fm;
  fm.kind = ObjectKind::featuremap;
  fm.scales_with_minibatch = true;
  fm.size_base = 1000;  // not aligned
  // 1000 * 3 / 2 = 1500 -> 1536
  CHECK(scale_size(fm, 3, 2) == 1536);
  // zero stays zero
  fm.size_base = 0;
  CHECK(scale_size(fm, 7, 2) == 0);
}

TEST_CASE("scale_size linearity against exact rational values") {
  Rng rng(0xded1);
  for (int trial = 0; trial < 200; ++trial) {
    const Bytes size = static_cast<Bytes>(rng.range(1, 1'000'000'000));
    const int k_base = static_cast<int>(rng.range(1, 64));
    const int a = static_cast<int>(rng.range(1, 32));
    MemObject o;
    o.scales_with_minibatch = true;
    o.size_base = size;
    // integer multiples are exact up to one alignment granule above
    const Bytes exact = size * static_cast<Bytes>(a);
    const Bytes got = scale_size(o, a * k_base, k_base);
    CHECK(got >= exact);
    CHECK(got - exact < kAlignGranule);
  }
}

TEST_CASE("peak traversal finds the prefix-sum maximum") {
  GmapBuilder b(1);
  auto o1 = b.object("o1", 100);
  auto o2 = b.object("o2", 50);
  auto o3 = b.object("o3", 30);
  b.op(MemOpKind::allocate, o1, 1)
      .op(MemOpKind::allocate, o2, 1)
      .op(MemOpKind::release, o1, 1)
      .op(MemOpKind::allocate, o3, 1);
  Gmap g = b.build();
  PeakResult peak = peak_layerwise_memory(g, 1, {});
  CHECK(peak.peak_bytes == 512 + 512);  // sizes round up to the granule
  CHECK(peak.op_begin == 1);

  GmapBuilder zeros(1);
  auto z = zeros.object("z", 0);
  zeros.op(MemOpKind::allocate, z, 1).op(MemOpKind::release, z, 1);
  CHECK(peak_layerwise_memory(zeros.build(), 1, {}).peak_bytes == 0);
}

TEST_CASE("peak is monotone in minibatch and in pin growth") {
  Rng rng(0x9a7e);
  for (int trial = 0; trial < 20; ++trial) {
    SyntheticOptions opts;
    opts.min_layers = 2;
    opts.max_layers = 12;
    NetworkSpec net = generate_network(rng, opts);
    Gmap g = build_gmap(unfold_network(net), net);

    Bytes prev = 0;
    for (int k : {1, 3, 8, 17}) {
      Bytes p = peak_layerwise_memory(g, k, {}).peak_bytes;
      CHECK(p >= prev);
      prev = p;
    }

    PinSet pins;
    Bytes prev_pin = peak_layerwise_memory(g, 8, pins).peak_bytes;
    for (ObjectId id : g.featuremap_ids()) {
      pins.insert(id);
      Bytes p = peak_layerwise_memory(g, 8, pins).peak_bytes;
      CHECK(p >= prev_pin);
      prev_pin = p;
    }
  }
}

TEST_CASE("gmap net byte delta vanishes at every minibatch") {
  Rng rng(0x51de);
  NetworkSpec net = generate_network(rng);
  Gmap g = build_gmap(unfold_network(net), net);
  for (int k : {1, 7, 32}) {
    std::int64_t delta = 0;
    for (const auto& op : g.ops) {
      const auto sz = static_cast<std::int64_t>(g.op_bytes(op, k));
      switch (op.kind) {
        case MemOpKind::allocate:
        case MemOpKind::prefetch: delta += sz; break;
        case MemOpKind::release:
        case MemOpKind::offload: delta -= sz; break;
      }
    }
    CHECK(delta == 0);
  }
}

TEST_CASE("validate_gmap flags ordering and multiplicity violations") {
  NetworkSpec net = tiny_network(2);
  Gmap good = build_gmap(unfold_network(net), net);
  CHECK(validate_gmap(good).empty());

  // prefetch before offload
  GmapBuilder b(2);
  auto fm = b.object("fm", 64, ObjectKind::featuremap, true, 1, 2);
  b.op(MemOpKind::allocate, fm, 1)
      .op(MemOpKind::prefetch, fm, 1)
      .op(MemOpKind::offload, fm, 2)
      .op(MemOpKind::release, fm, 2);
  auto diags = validate_gmap(b.build());
  REQUIRE(diags.size() == 1);
  CHECK(diags[0].find("prefetch") != std::string::npos);

  // allocated twice
  GmapBuilder b2(1);
  auto ws = b2.object("ws", 64, ObjectKind::workspace);
  b2.op(MemOpKind::allocate, ws, 1)
      .op(MemOpKind::allocate, ws, 1)
      .op(MemOpKind::release, ws, 1);
  diags = validate_gmap(b2.build());
  REQUIRE(!diags.empty());
  CHECK(diags[0].find("one allocate") != std::string::npos);
}

TEST_CASE("hardware spec parses and validates") {
  HardwareSpec hw = parse_hardware_spec_json(
      R"({"format_version":1,"memory_budget_bytes":1073741824,
          "m_others_bytes":1048576,"delta_sync_s":0.002,
          "pcie_nominal_bytes_per_s":12000000000.0})",
      "inline");
  CHECK(hw.memory_budget == 1073741824ull);
  CHECK(hw.delta_sync_s == doctest::Approx(0.002));
  CHECK_THROWS_AS(
      parse_hardware_spec_json(R"({"memory_budget_bytes": 1})", "inline"),
      SpecError);
}
