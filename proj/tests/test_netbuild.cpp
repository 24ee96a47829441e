#include <doctest.h>

#include <cmath>
#include <sstream>

#include "robarch/errors.hpp"
#include "robarch/gradcheck.hpp"
#include "robarch/netbuild.hpp"
#include "support.hpp"

using namespace robarch;

namespace {

const ArchitectureSpec& robust(const char* name) {
  const RegistryEntry* e = find_registry_entry(name);
  REQUIRE(e != nullptr);
  return e->robust;
}

ArchitectureSpec tiny(StemKind stem = StemKind::Cifar) {
  ArchitectureSpec s;
  s.name = "tiny";
  s.stem.kind = stem;
  s.stem.out_width = 4;
  s.stages = {{1, 4}, {2, 6}};
  s.activation = ActivationKind::SiLU;
  s.num_classes = 3;
  return s;
}

Tensor random_batch(std::size_t n, InputShape in, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> v(n * static_cast<std::size_t>(in.channels * in.height * in.width));
  for (double& x : v) x = rng.uniform();
  return Tensor::from({n, std::size_t(in.channels), std::size_t(in.height), std::size_t(in.width)}, std::move(v));
}

std::size_t count_kind(const Network& net, const std::string& kind) {
  std::size_t n = 0;
  for (const auto& l : net.layers()) n += l.kind == kind;
  return n;
}

Tensor param(const Network& net, const std::string& name) {
  for (const auto& p : net.parameters())
    if (p.name == name) return p.tensor;
  FAIL("no parameter " << name);
  return {};
}

}  // namespace

TEST_CASE("described parameter total equals the counted total") {
  const Network big = build_network(robust("RaResNet-50"), {3, 224, 224}, 0);
  CHECK(describe(big).total == count_params(robust("RaResNet-50")));
  CHECK(big.stage_output_heights() == std::vector<std::size_t>{56, 28, 14, 7});

  Rng rng(11);
  for (int t = 0; t < 60; ++t) {
    const ArchitectureSpec s = oracle::random_spec(rng);
    const int side = oracle::buildable_side(s);
    const int cin = static_cast<int>(rng.uniform_int(1, 3));
    const Network net = build_network(s, {cin, side, side}, static_cast<std::uint64_t>(t));
    const LayerTable table = describe(net);
    std::int64_t rows = 0;
    for (const auto& r : table.rows) rows += static_cast<std::int64_t>(r.count);
    CAPTURE(emit_spec(s));
    CHECK(table.total == rows);
    CHECK(table.total == count_params(s, cin));
    CHECK(table.total == oracle::params(s, cin));
  }
}

TEST_CASE("random networks produce finite logits of the right shape") {
  Rng rng(12);
  for (int t = 0; t < 40; ++t) {
    const ArchitectureSpec s = oracle::random_spec(rng, 3, 8);
    const int side = oracle::buildable_side(s);
    Network net = build_network(s, {3, side, side}, 7);
    for (Mode mode : {Mode::Train, Mode::Eval}) {
      const Tensor y = forward(net, random_batch(2, {3, side, side}, 5), mode);
      CHECK(y.shape() == Shape{2, std::size_t(s.num_classes)});
      for (double v : y.values()) CHECK(std::isfinite(v));
    }
  }
}

TEST_CASE("stage geometry per stem") {
  CHECK(build_network(find_registry_entry("ResNet-50")->baseline, {3, 224, 224}, 0).stage_output_heights() ==
        std::vector<std::size_t>{56, 28, 14, 7});

  ArchitectureSpec p = tiny(StemKind::Patchify);
  p.stem.patch = 4;
  p.stem.stride = 4;
  CHECK(build_network(p, {3, 32, 32}, 0).stage_output_heights() == std::vector<std::size_t>{8, 4});
  p.stem.patch = 2;
  p.stem.stride = 2;
  CHECK(build_network(p, {3, 32, 32}, 0).stage_output_heights() == std::vector<std::size_t>{8, 4});
  p.stem.patch = 3;
  p.stem.stride = 1;
  CHECK(build_network(p, {3, 32, 32}, 0).stage_output_heights() == std::vector<std::size_t>{8, 4});
  CHECK(build_network(tiny(), {3, 32, 32}, 0).stage_output_heights() == std::vector<std::size_t>{32, 16});

  CHECK_THROWS_AS(build_network(find_registry_entry("ResNet-50")->baseline, {3, 30, 30}, 0), ShapeError);
  CHECK_THROWS_AS(build_network(tiny(), {3, 0, 32}, 0), ShapeError);
}

TEST_CASE("block structure follows the spec") {
  ArchitectureSpec s = tiny();
  CHECK(count_kind(build_network(s, {3, 8, 8}, 0), "se") == 0);
  s.block.se_ratio = 4;
  CHECK(count_kind(build_network(s, {3, 8, 8}, 0), "se") == 3);

  s.block.act_mask = {false, false};
  const Network quiet = build_network(s, {3, 8, 8}, 0);
  CHECK(count_kind(quiet, "act") == 1);
  CHECK(quiet.layers()[2].name == "stem.act");

  s.block.norm_mask = {false, true};
  const Network biased = build_network(s, {3, 8, 8}, 0);
  CHECK(param(biased, "stages.0.blocks.0.conv1.bias").shape() == Shape{4});

  ArchitectureSpec w = robust("RaWRN-28-10");
  for (auto& st : w.stages) st.depth = 1;
  const Network wide = build_network(w, {3, 32, 32}, 0);
  CHECK(param(wide, "stem.conv.weight").shape() == Shape{96, 3, 3, 3});
  CHECK(param(wide, "stages.0.blocks.0.conv1.weight").shape() == Shape{128, 96, 3, 3});
  CHECK(param(wide, "stages.1.blocks.0.conv2.weight").shape() == Shape{256, 256, 3, 3});
  CHECK(param(wide, "stages.2.blocks.0.se.fc1.weight").shape() == Shape{128, 512});
  CHECK(param(wide, "head.fc.weight").shape() == Shape{10, 512});
}

TEST_CASE("zero head gives uniform predictions") {
  ArchitectureSpec s = tiny();
  s.num_classes = 7;
  Network net = build_network(s, {3, 8, 8}, 3);
  for (double& v : param(net, "head.fc.weight").mutable_values()) v = 0.0;
  const Tensor x = random_batch(4, {3, 8, 8}, 1);
  const Tensor loss = cross_entropy(forward(net, x, Mode::Eval), std::vector<int>{0, 3, 6, 2});
  CHECK(std::abs(loss.item() - std::log(7.0)) < 1e-12);
}

TEST_CASE("eval logits do not depend on batch composition") {
  Network net = build_network(tiny(), {3, 8, 8}, 4);
  const Tensor x = random_batch(3, {3, 8, 8}, 2);
  const Tensor all = forward(net, x, Mode::Eval);
  for (std::size_t i = 0; i < 3; ++i) {
    const auto img = x.values().subspan(i * 192, 192);
    const Tensor one = forward(net, Tensor::from({1, 3, 8, 8}, {img.begin(), img.end()}), Mode::Eval);
    for (std::size_t k = 0; k < 3; ++k) CHECK(std::abs(one.values()[k] - all.values()[i * 3 + k]) < 1e-12);
  }
  CHECK_FALSE(all.requires_grad());
  CHECK_THROWS_AS(forward(net, random_batch(1, {3, 16, 16}, 0), Mode::Eval), ShapeError);
  CHECK_THROWS_AS(forward(net, Tensor::zeros({0, 3, 8, 8}), Mode::Eval), ShapeError);
}

TEST_CASE("training gradients are finite and reach every parameter") {
  ArchitectureSpec s = tiny();
  s.block.se_ratio = 2;
  s.activation = ActivationKind::PSSiLU;
  Network net = build_network(s, {3, 8, 8}, 5);
  backward(cross_entropy(forward(net, random_batch(4, {3, 8, 8}, 3), Mode::Train), std::vector<int>{0, 1, 2, 0}));
  for (const auto& p : net.parameters()) {
    CAPTURE(p.name);
    double norm = 0.0;
    for (double g : p.tensor.grad()) {
      CHECK(std::isfinite(g));
      norm += g * g;
    }
    CHECK(norm > 0.0);
  }
}

TEST_CASE("network input gradient matches finite differences") {
  ArchitectureSpec s = tiny();
  s.block.se_ratio = 2;
  Network net = build_network(s, {2, 4, 4}, 6);
  const Tensor x = random_batch(3, {2, 4, 4}, 4);
  const std::vector<int> y{0, 1, 2};
  CHECK(grad_check([&](const Tensor& t) { return cross_entropy(net.logits(t, Mode::Eval), y); }, x) < 1e-4);
  CHECK(grad_check([&](const Tensor& t) {
          Network copy = net.clone();
          return cross_entropy(copy.logits(t, Mode::Train), y);
        }, x) < 1e-4);
}

TEST_CASE("clone is independent and state round-trips") {
  Network a = build_network(tiny(), {3, 8, 8}, 8);
  Network b = a.clone();
  const Tensor x = random_batch(2, {3, 8, 8}, 9);
  const Tensor y0 = forward(a, x, Mode::Eval);
  const std::vector<double> before(y0.values().begin(), y0.values().end());
  CHECK(parameter_hash(a) == parameter_hash(b));
  param(b, "head.fc.bias").mutable_values()[0] += 1.0;
  forward(b, x, Mode::Train);  // moves b's running statistics only
  CHECK(parameter_hash(a) != parameter_hash(b));
  const Tensor after = forward(a, x, Mode::Eval);
  CHECK(std::vector<double>(after.values().begin(), after.values().end()) == before);

  Network c = build_network(tiny(), {3, 8, 8}, 99);
  CHECK(parameter_hash(c) != parameter_hash(b));
  c.load_state(b.state());
  CHECK(parameter_hash(c) == parameter_hash(b));
  const Tensor yb = forward(b, x, Mode::Eval), yc = forward(c, x, Mode::Eval);
  CHECK(std::vector<double>(yb.values().begin(), yb.values().end()) ==
        std::vector<double>(yc.values().begin(), yc.values().end()));

  std::vector<NamedTensor> st = b.state();
  st.pop_back();
  CHECK_THROWS_AS(c.load_state(st), FormatError);
  ArchitectureSpec other = tiny();
  other.stages[1].width = 5;
  CHECK_THROWS_AS(build_network(other, {3, 8, 8}, 0).load_state(b.state()), ShapeError);
}

TEST_CASE("construction is deterministic in the seed") {
  CHECK(parameter_hash(build_network(tiny(), {3, 8, 8}, 1)) == parameter_hash(build_network(tiny(), {3, 8, 8}, 1)));
  CHECK(parameter_hash(build_network(tiny(), {3, 8, 8}, 1)) != parameter_hash(build_network(tiny(), {3, 8, 8}, 2)));
}

TEST_CASE("describe csv") {
  ArchitectureSpec s = tiny();
  s.stages = {{1, 2}};
  s.stem.out_width = 2;
  const LayerTable t = describe(build_network(s, {1, 4, 4}, 0));
  std::ostringstream out;
  write_describe_csv(out, t);
  const std::string csv = out.str();
  CHECK(csv.rfind("name,shape,count\nstem.conv.weight,2x1x3x3,18\n", 0) == 0);
  CHECK(csv.find("\ntotal,,") != std::string::npos);
  CHECK(csv.substr(csv.rfind("total,,") + 7) == std::to_string(count_params(s, 1)) + "\n");
}
