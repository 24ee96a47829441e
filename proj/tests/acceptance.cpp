// Acceptance checks. `robarch_acceptance N` runs criterion N (1-9) and prints
// one PASS/FAIL line; with no argument every criterion runs in order.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <thread>

#include <unistd.h>

#include "robarch/adversarial.hpp"
#include "robarch/archspec.hpp"
#include "robarch/cli.hpp"
#include "robarch/designspace.hpp"
#include "robarch/errors.hpp"
#include "robarch/gradcheck.hpp"
#include "robarch/netbuild.hpp"
#include "support.hpp"

using namespace robarch;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = true;
  std::ostringstream detail;
};

std::string fmt(double v, int prec = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", prec, v);
  return buf;
}

const ArchitectureSpec& robust(const char* name) {
  const RegistryEntry* e = find_registry_entry(name);
  if (!e) throw SpecError(std::string("registry lacks ") + name);
  return e->robust;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

Tensor rand_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  std::vector<double> v(shape_numel(shape));
  for (double& x : v) x = rng.uniform(lo, hi);
  return Tensor::from(std::move(shape), std::move(v));
}

Tensor probe(const Tensor& y, std::uint64_t seed) {
  Rng rng(seed);
  return sum(mul(y, rand_tensor(y.shape(), rng, 0.5, 1.5)));
}

// 1 -------------------------------------------------------------------------

struct TableRow {
  const char* name;
  double wd;
  double params_m;
};

constexpr TableRow kTable6[] = {
    {"RaResNet-50", 8.99, 26},   {"RaWRN-22-10", 12.62, 27}, {"RaWRN-28-10", 12.57, 37},  {"RaResNet-101", 7.62, 46},
    {"RaWRN-34-12", 11.20, 67},  {"RaWRN-101-2", 11.59, 104}, {"RaWRN-70-16", 10.57, 267},
};

void wd_table(Outcome& o) {
  for (const auto& row : kTable6) {
    const double wd = wd_ratio(robust(row.name));
    const bool ok = std::abs(wd - row.wd) <= 0.01 + 1e-9;
    o.pass &= ok;
    o.detail << row.name << "=" << fmt(wd, 3) << (ok ? "" : "!") << " ";
  }
  const double base = wd_ratio(find_registry_entry("ResNet-50")->baseline);
  o.pass &= base == 32.0;
  o.detail << "ResNet-50=" << fmt(base, 3) << " (tol 0.01, baseline exact)";
}

// 2 -------------------------------------------------------------------------

void param_counts(Outcome& o) {
  const ArchitectureSpec base = load_spec_file(oracle::spec_path("resnet50.spec"));
  const Principle order[] = {Principle::DepthWidth, Principle::ConvStem, Principle::SqueezeExcite,
                             Principle::SmoothAct};
  const double progression[] = {25.7, 25.8, 25.9, 26.2, 26.2};
  const double tol[] = {0.02, 0.03, 0.02, 0.02, 0.02};
  ArchitectureSpec s = base;
  o.detail << "roadmap";
  for (std::size_t k = 0; k < 5; ++k) {
    if (k > 0) s = robustify_step(s, order[k - 1]);
    const double m = static_cast<double>(count_params(s)) / 1e6;
    const bool ok = std::abs(m - progression[k]) / progression[k] <= tol[k];
    o.pass &= ok;
    o.detail << " " << fmt(m, 2) << "/" << progression[k] << (ok ? "" : "!");
  }
  o.detail << "; table";
  for (const auto& row : kTable6) {
    const double m = static_cast<double>(count_params(robust(row.name))) / 1e6;
    const bool ok = std::abs(m - row.params_m) / row.params_m <= 0.02;
    o.pass &= ok;
    o.detail << " " << row.name << "=" << fmt(m, 2) << "/" << row.params_m << (ok ? "" : "!");
  }
  o.detail << " (M, tol 2%, step 1 at 3%)";
}

// 3 -------------------------------------------------------------------------

void cross_oracle(Outcome& o) {
  Rng rng(2024);
  int agree = 0;
  for (int t = 0; t < 50; ++t) {
    const ArchitectureSpec s = oracle::random_spec(rng, 4, 24);
    if (!validate(s).empty()) throw SpecError("random spec failed validation");
    const int side = oracle::buildable_side(s);
    const Network net = build_network(s, {3, side, side}, static_cast<std::uint64_t>(t));
    agree += describe(net).total == count_params(s) ? 1 : 0;
  }
  o.pass = agree == 50;
  o.detail << agree << "/50 random specs: describe() total == count_params";
}

// 4 -------------------------------------------------------------------------

void gradients(Outcome& o) {
  std::map<std::string, double> worst;
  auto record = [&](const std::string& kind, double err) { worst[kind] = std::max(worst[kind], err); };

  const ActivationKind acts[] = {ActivationKind::ReLU,  ActivationKind::GELU,  ActivationKind::SiLU,
                                 ActivationKind::PReLU, ActivationKind::PSiLU, ActivationKind::PSSiLU};
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(7000 + seed);
    {
      const Tensor x = rand_tensor({2, 3, 5, 5}, rng);
      Tensor k = rand_tensor({4, 3, 3, 3}, rng), b = rand_tensor({4}, rng);
      const ConvGeometry g{1 + static_cast<int>(seed % 2), 1, 1};
      record("conv", grad_check([&](const Tensor& t) { return probe(conv2d(t, k, b, g), seed); }, x));
      Tensor xx = x;
      record("conv", grad_check_leaves([&] { return probe(conv2d(xx, k, b, g), seed); }, {k, b}).max_rel_error);
    }
    for (Mode mode : {Mode::Train, Mode::Eval}) {
      const Tensor x = rand_tensor({3, 2, 3, 3}, rng, -2, 2);
      Tensor g = rand_tensor({2}, rng, 0.5, 1.5), b = rand_tensor({2}, rng);
      auto f = [&](const Tensor& t) {
        BatchNormState st(2);
        return probe(batchnorm(t, g, b, st, mode), seed);
      };
      record("norm", grad_check(f, x));
      Tensor xx = x;
      record("norm", grad_check_leaves([&] { return f(xx); }, {g, b}).max_rel_error);
    }
    for (auto kind : acts) {
      Tensor x = rand_tensor({2, 2, 3, 3}, rng, -3, 3);
      for (double& v : x.mutable_values())
        if (std::abs(v) < 1e-3) v = 0.5;
      const auto init = activation_initial_params(kind);
      Tensor p = init.empty() ? Tensor{} : Tensor::from({init.size()}, init);
      const std::string name = std::string("act:") + std::string(to_string(kind));
      record(name, grad_check([&](const Tensor& t) { return probe(activation(kind, t, p), seed); }, x));
      if (p.defined())
        record(name, grad_check_leaves([&] { return probe(activation(kind, x, p), seed); }, {p}).max_rel_error);
    }
    {
      const Tensor x = rand_tensor({2, 4, 3, 3}, rng);
      Tensor w1 = rand_tensor({1, 4}, rng), b1 = rand_tensor({1}, rng, 0.1, 0.5), w2 = rand_tensor({4, 1}, rng),
             b2 = rand_tensor({4}, rng);
      record("se", grad_check([&](const Tensor& t) { return probe(se_gate(t, w1, b1, w2, b2), seed); }, x));
      Tensor xx = x;
      record("se", grad_check_leaves([&] { return probe(se_gate(xx, w1, b1, w2, b2), seed); }, {w1, b1, w2, b2})
                       .max_rel_error);
    }
    {
      Tensor x = rand_tensor({2, 2, 4, 4}, rng);
      for (std::size_t i = 0; i < x.numel(); ++i) x.mutable_values()[i] += 0.01 * static_cast<double>(i);
      record("maxpool", grad_check([&](const Tensor& t) { return probe(max_pool2d(t, 3, 2, 1), seed); }, x));
      record("avgpool", grad_check([&](const Tensor& t) { return probe(global_avg_pool(t), seed); }, x));
      const Tensor f = rand_tensor({3, 5}, rng);
      Tensor w = rand_tensor({2, 5}, rng), b = rand_tensor({2}, rng);
      record("linear", grad_check([&](const Tensor& t) { return probe(linear(t, w, b), seed); }, f));
      Tensor ff = f;
      record("linear", grad_check_leaves([&] { return probe(linear(ff, w, b), seed); }, {w, b}).max_rel_error);
      const Tensor z = rand_tensor({3, 2}, rng, -2, 2);
      record("add", grad_check([&](const Tensor& t) { return probe(add(t, f), seed); }, f));
      const Tensor other = rand_tensor({3, 5}, rng);
      record("mul", grad_check([&](const Tensor& t) { return probe(mul(t, other), seed); }, f));
      record("cross_entropy",
             grad_check([&](const Tensor& t) { return cross_entropy(t, std::vector<int>{0, 1, 1}); }, z));
      const Tensor z2 = rand_tensor({3, 2}, rng, -2, 2);
      record("kl", grad_check([&](const Tensor& t) { return kl_divergence(t, z2); }, z));
      record("kl", grad_check([&](const Tensor& t) { return kl_divergence(z2, t); }, z));
    }
    {
      ArchitectureSpec s;
      s.name = "bottleneck-se-silu";
      s.stem.kind = StemKind::Cifar;
      s.stem.out_width = 4;
      s.stages = {{1, 3}};
      s.block.kind = BlockKind::Bottleneck;
      s.block.expansion = 2;
      s.block.se_ratio = 2;
      s.block.act_mask = {true, true, true};
      s.block.norm_mask = {true, true, true};
      s.activation = ActivationKind::SiLU;
      s.num_classes = 3;
      Network net = build_network(s, {2, 3, 3}, seed);
      const Tensor x = rand_tensor({2, 2, 3, 3}, rng, 0, 1);
      const std::vector<int> y{0, 2};
      auto loss = [&](const Tensor& t) { return cross_entropy(net.logits(t, Mode::Train), y); };
      record("network", grad_check(loss, x));
      std::vector<Tensor> leaves;
      for (const auto& p : net.parameters()) leaves.push_back(p.tensor);
      record("network", grad_check_leaves([&] { return loss(x); }, leaves).max_rel_error);
    }
  }
  double max_err = 0.0;
  for (const auto& [kind, err] : worst) {
    max_err = std::max(max_err, err);
    if (err >= 1e-4) o.detail << kind << "=" << err << "! ";
  }
  o.pass = max_err < 1e-4;
  o.detail << worst.size() << " kinds x 20 seeds, max rel error " << max_err << " (tol 1e-4, h 1e-5)";
}

// 5 -------------------------------------------------------------------------

LinearModel random_linear(std::size_t classes, std::size_t d, Rng& rng) {
  return LinearModel(rand_tensor({classes, d}, rng, -2, 2), rand_tensor({classes}, rng, -0.5, 0.5));
}

Network toy_net(std::uint64_t seed) {
  ArchitectureSpec s;
  s.name = "toy";
  s.stem.kind = StemKind::Cifar;
  s.stem.out_width = 4;
  s.stages = {{1, 4}, {1, 6}};
  s.num_classes = 3;
  return build_network(s, {1, 4, 4}, seed);
}

std::vector<int> rand_labels(std::size_t n, int k, Rng& rng) {
  std::vector<int> y(n);
  for (int& v : y) v = static_cast<int>(rng.uniform_int(0, k - 1));
  return y;
}

void attacks(Outcome& o) {
  Rng rng(55);
  Network net = toy_net(1);

  bool identity = true;
  for (int t = 0; t < 50; ++t) {
    AttackConfig cfg{0.0, rng.uniform(0.01, 0.5), static_cast<int>(rng.uniform_int(0, 5)), t % 2 == 0, t % 3 == 0};
    const Tensor x = rand_tensor({3, 1, 4, 4}, rng, 0, 1);
    Rng r(static_cast<std::uint64_t>(t));
    const Tensor adv = pgd(net, x, rand_labels(3, 3, rng), cfg, r);
    identity &= std::equal(adv.values().begin(), adv.values().end(), x.values().begin());
  }

  bool reduction = true;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const Tensor x = rand_tensor({4, 1, 4, 4}, rng, 0, 1);
    const auto y = rand_labels(4, 3, rng);
    const double eps = rng.uniform(0.01, 0.3), alpha = rng.uniform(0.01, 0.3);
    for (bool rs : {false, true}) {
      Rng a(seed), b(seed);
      const Tensor p = pgd(net, x, y, AttackConfig{eps, alpha, 1, rs, false}, a);
      const Tensor f = fgsm(net, x, y, eps, alpha, rs, b);
      reduction &= std::equal(p.values().begin(), p.values().end(), f.values().begin());
    }
  }

  double corner_gap = 0.0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const std::size_t d = 6;
    LinearModel m = random_linear(2, d, rng);
    const Tensor x = rand_tensor({10, 1, 1, d}, rng, 0, 1);
    const auto y = rand_labels(10, 2, rng);
    const double eps = rng.uniform(0.01, 0.3);
    Rng r(seed);
    const Tensor adv = pgd(m, x, y, AttackConfig::pgd(eps, 10), r);
    NoGradGuard off;
    const Tensor loss = cross_entropy(m.logits(adv, Mode::Eval), y, Reduction::None);
    const std::vector<double> W(m.weight().values().begin(), m.weight().values().end());
    const std::vector<double> b(m.bias().values().begin(), m.bias().values().end());
    for (std::size_t i = 0; i < 10; ++i) {
      const std::vector<double> xi(x.values().begin() + static_cast<std::ptrdiff_t>(i * d),
                                   x.values().begin() + static_cast<std::ptrdiff_t>((i + 1) * d));
      corner_gap = std::max(corner_gap, std::abs(loss.values()[i] - oracle::corner_max_ce(xi, y[i], W, b, 2, eps)));
    }
  }

  std::size_t outside = 0;
  for (int t = 0; t < 1000; ++t) {
    AttackConfig cfg;
    cfg.eps = rng.uniform(0.0, 0.5);
    cfg.steps = static_cast<int>(rng.uniform_int(0, 4));
    cfg.alpha = rng.uniform(1e-3, 0.6);
    cfg.random_start = rng.uniform() < 0.5;
    cfg.best_iterate = rng.uniform() < 0.5;
    Rng r(static_cast<std::uint64_t>(t));
    Tensor x, adv;
    if (t % 10 == 0) {
      x = rand_tensor({2, 1, 4, 4}, rng, 0, 1);
      adv = pgd(net, x, rand_labels(2, 3, rng), cfg, r);
    } else {
      const auto d = static_cast<std::size_t>(rng.uniform_int(1, 10));
      LinearModel m = random_linear(3, d, rng);
      x = rand_tensor({3, 1, 1, d}, rng, 0, 1);
      adv = pgd(m, x, rand_labels(3, 3, rng), cfg, r);
    }
    for (std::size_t i = 0; i < x.numel(); ++i) {
      const double a = adv.values()[i];
      if (std::abs(a - x.values()[i]) > cfg.eps + 1e-12 || a < 0.0 || a > 1.0) {
        ++outside;
        break;
      }
    }
  }

  o.pass = identity && reduction && corner_gap < 1e-6 && outside == 0;
  o.detail << "(a) eps=0 identity " << (identity ? "ok" : "FAILED") << "; (b) PGD1==FGSM "
           << (reduction ? "ok" : "FAILED") << "; (c) corner gap " << corner_gap << " (tol 1e-6); (d) "
           << 1000 - outside << "/1000 configs in ball";
}

// 6 -------------------------------------------------------------------------

ArchitectureSpec toy_spec() {
  ArchitectureSpec s;
  s.name = "toy";
  s.stem.kind = StemKind::Cifar;
  s.stem.out_width = 8;
  s.stages = {{1, 8}, {1, 16}};
  s.block.kind = BlockKind::Basic;
  s.activation = ActivationKind::ReLU;
  s.num_classes = 2;
  return s;
}

void toy_training(Outcome& o) {
  const auto start = std::chrono::steady_clock::now();
  SyntheticOptions opts;
  opts.channels = 1;
  opts.noise = 0.1;
  const double eps = 0.05;
  const unsigned workers = std::max(1u, std::thread::hardware_concurrency());
  double gap_sum = 0.0;
  for (std::uint64_t s = 0; s < 3; ++s) {
    const Dataset train_set = gen_synthetic(100 + s, 2000, 16, 2, opts);
    const Dataset test_set = gen_synthetic(900 + s, 500, 16, 2, opts);
    double robust_acc[2];
    for (int k = 0; k < 2; ++k) {
      Network net = build_network(toy_spec(), {1, 16, 16}, s);
      TrainConfig cfg;
      cfg.method = k == 0 ? TrainMethod::Standard : TrainMethod::FastAT;
      cfg.epochs = 3;
      cfg.batch_size = 50;
      cfg.lr_max = 0.1;
      cfg.seed = s;
      cfg.attack = AttackConfig::fast_at(eps);
      cfg.eval_attack = AttackConfig::pgd(eps, 10);
      cfg.monitor_samples = 200;
      train(net, train_set, cfg);
      robust_acc[k] = evaluate_robust(net, test_set, AttackConfig::pgd(eps, 10), 1000 + s, 100, workers);
    }
    gap_sum += robust_acc[1] - robust_acc[0];
    o.detail << "seed " << s << ": std " << fmt(robust_acc[0], 3) << " fast-at " << fmt(robust_acc[1], 3) << "; ";
  }
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  const double gap = gap_sum / 3.0;
  o.pass = gap >= 0.20 && seconds < 600.0;
  o.detail << "mean gap " << fmt(100 * gap, 1) << " pp (need >= 20), " << fmt(seconds, 0) << " s (limit 600)";
}

// 7 -------------------------------------------------------------------------

void design_space(Outcome& o) {
  const ArchitectureSpec& templ = find_registry_entry("ResNet-50")->baseline;
  const SampleBounds bounds;
  std::vector<DesignSample> samples;
  std::size_t bad = 0;
  for (std::uint64_t seed = 0; seed < 1000; ++seed) {
    DesignSample s = sample_config(seed, bounds, templ);
    bool ok = bounds.n_choices.count(static_cast<int>(s.spec.stages.size())) == 1 && validate(s.spec).empty();
    for (const auto& st : s.spec.stages)
      ok &= st.depth >= 1 && st.depth <= bounds.max_depth && st.width >= 1 && st.width <= bounds.max_width;
    bad += ok ? 0 : 1;
    samples.push_back(std::move(s));
  }

  Rng rng(77);
  double max_wd = 0.0;
  for (const auto& s : samples) max_wd = std::max(max_wd, s.wd);
  std::vector<double> wds, errors;
  for (const auto& s : samples) {
    const double e = 0.1 + 0.8 * s.wd / max_wd + rng.normal(0.0, 0.02);
    wds.push_back(s.wd);
    errors.push_back(std::clamp(e, 0.0, 1.0));
  }
  const EdfCurve edf = compute_edf(errors);
  bool cdf = !edf.empty() && edf.ys.back() == 1.0;
  for (std::size_t k = 0; k < edf.xs.size(); ++k) {
    cdf &= edf.ys[k] > 0.0 && edf.ys[k] <= 1.0;
    if (k) cdf &= edf.xs[k] > edf.xs[k - 1] && edf.ys[k] > edf.ys[k - 1];
    std::size_t below = 0;
    for (double e : errors) below += e <= edf.xs[k] ? 1 : 0;
    cdf &= std::abs(edf.at(edf.xs[k]) - static_cast<double>(below) / static_cast<double>(errors.size())) < 1e-12;
  }
  const double r = pearson(wds, errors);
  o.pass = bad == 0 && cdf && r > 0.8;
  o.detail << 1000 - bad << "/1000 samples within bounds and valid; EDF invariants " << (cdf ? "ok" : "FAILED")
           << "; pearson(wd, error) = " << fmt(r, 4) << " (need > 0.8)";
}

// 8 -------------------------------------------------------------------------

void roadmap(Outcome& o) {
  const std::string fixture = slurp(oracle::spec_path("ra-resnet50.spec"));
  const std::string direct = emit_spec(robustify_all(load_spec_file(oracle::spec_path("resnet50.spec"))));
  std::ostringstream out, err;
  const int code = run_cli({"robustify", oracle::spec_path("resnet50.spec"), "--all"}, out, err);
  o.pass = direct == fixture && code == kExitOk && out.str() == fixture;
  o.detail << "library emit " << (direct == fixture ? "identical" : "DIFFERS") << ", cli emit "
           << (out.str() == fixture ? "identical" : "DIFFERS") << " to the RaResNet-50 fixture (" << fixture.size()
           << " bytes)";
}

// 9 -------------------------------------------------------------------------

void determinism(Outcome& o) {
  const fs::path dir = fs::temp_directory_path() / ("robarch-acceptance-" + std::to_string(::getpid()));
  fs::create_directories(dir);
  save_spec_file(toy_spec(), (dir / "toy.spec").string());
  std::ostringstream gout, gerr;
  if (run_cli({"gen-data", "--seed", "1", "-o", (dir / "d.bin").string(), "--n", "200", "--size", "16", "--classes",
               "2", "--channels", "1"},
              gout, gerr) != kExitOk)
    throw Error("gen-data failed: " + gerr.str());
  std::string hashes[2], csvs[2];
  for (int k = 0; k < 2; ++k) {
    const std::string csv = (dir / ("run" + std::to_string(k) + ".csv")).string();
    std::ostringstream out, err;
    const int code = run_cli({"train", (dir / "toy.spec").string(), "--data", (dir / "d.bin").string(), "--shape",
                              "1x16x16", "--classes", "2", "--seed", "42", "--method", "fast-at", "--eps", "0.05",
                              "--epochs", "2", "--batch-size", "25", "--eval-eps", "0.05", "--eval-steps", "3",
                              "--monitor", "50", "--csv", csv},
                             out, err);
    if (code != kExitOk) throw Error("train failed: " + err.str());
    hashes[k] = out.str();
    csvs[k] = slurp(csv);
  }
  fs::remove_all(dir);
  o.pass = hashes[0] == hashes[1] && csvs[0] == csvs[1] && !csvs[0].empty();
  std::string h = hashes[0];
  if (!h.empty() && h.back() == '\n') h.pop_back();
  o.detail << "two train runs, seed 42: " << h << " vs " << (hashes[0] == hashes[1] ? "same" : "DIFFERENT")
           << "; CSV " << csvs[0].size() << " bytes " << (csvs[0] == csvs[1] ? "identical" : "DIFFERENT");
}

struct Criterion {
  const char* title;
  std::function<void(Outcome&)> run;
};

const Criterion kCriteria[] = {
    {"wd-ratio table", wd_table},          {"parameter counts", param_counts}, {"describe vs count_params", cross_oracle},
    {"gradient check", gradients},         {"attack correctness", attacks},    {"toy adversarial training", toy_training},
    {"design-space pipeline", design_space}, {"roadmap transform", roadmap},   {"training determinism", determinism},
};

bool run(int n) {
  Outcome o;
  try {
    kCriteria[n - 1].run(o);
  } catch (const std::exception& e) {
    o.pass = false;
    o.detail << "exception: " << e.what();
  }
  std::printf("criterion %d %s: %s: %s\n", n, o.pass ? "PASS" : "FAIL", kCriteria[n - 1].title, o.detail.str().c_str());
  std::fflush(stdout);
  return o.pass;
}

}  // namespace

int main(int argc, char** argv) {
  if (argc > 2) {
    std::fprintf(stderr, "usage: %s [criterion 1-9]\n", argv[0]);
    return 2;
  }
  if (argc == 2) {
    const int n = std::atoi(argv[1]);
    if (n < 1 || n > 9) {
      std::fprintf(stderr, "criterion must be 1-9\n");
      return 2;
    }
    return run(n) ? 0 : 1;
  }
  bool all = true;
  for (int n = 1; n <= 9; ++n) all &= run(n);
  return all ? 0 : 1;
}
