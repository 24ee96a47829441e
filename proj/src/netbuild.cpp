#include "robarch/netbuild.hpp"

#include <cmath>
#include <iomanip>
#include <map>
#include <ostream>

#include "robarch/csv.hpp"
#include "robarch/errors.hpp"
#include "robarch/random.hpp"
#include "spec_geometry.hpp"

namespace robarch {

namespace {

Tensor he_normal(Shape shape, std::size_t fan_in, Rng& rng) {
  const double std = std::sqrt(2.0 / static_cast<double>(fan_in));
  std::vector<double> v(shape_numel(shape));
  for (double& x : v) x = rng.normal(0.0, std);
  return Tensor::from(std::move(shape), std::move(v), true);
}

Tensor uniform_fan_in(Shape shape, std::size_t fan_in, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  std::vector<double> v(shape_numel(shape));
  for (double& x : v) x = rng.uniform(-bound, bound);
  return Tensor::from(std::move(shape), std::move(v), true);
}

std::string geom_detail(std::size_t k, const ConvGeometry& g) {
  std::string out = std::to_string(k) + "x" + std::to_string(k) + "/" + std::to_string(g.stride);
  if (g.pad_lo || g.pad_hi) out += " pad " + std::to_string(g.pad_lo) + "," + std::to_string(g.pad_hi);
  return out;
}

}  // namespace

Network build_network(const ArchitectureSpec& spec, InputShape input, std::uint64_t seed) {
  return Network::build(spec, input, seed);
}

Network Network::build(const ArchitectureSpec& spec, InputShape input, std::uint64_t seed) {
  require_valid(spec);
  if (input.channels < 1 || input.height < 1 || input.width < 1)
    throw ShapeError("input shape must be positive in every dimension");

  const int first_stride = detail::first_stage_stride(spec.stem);
  if (first_stride == 0)
    throw ShapeError("patchify stride " + std::to_string(spec.stem.stride) +
                     " cannot be completed to a x4 reduction by an integer stage-1 stride");
  std::size_t factor = static_cast<std::size_t>(detail::stem_downsampling(spec.stem) * first_stride);
  for (std::size_t s = 1; s < spec.stages.size(); ++s) factor *= 2;
  if (input.height % static_cast<int>(factor) != 0 || input.width % static_cast<int>(factor) != 0)
    throw ShapeError("input " + std::to_string(input.height) + "x" + std::to_string(input.width) +
                     " is not divisible by the total downsampling factor " + std::to_string(factor));

  Network net;
  net.spec_ = spec;
  net.input_ = input;
  net.total_downsampling_ = factor;
  Rng rng(seed);

  auto make_conv = [&](std::string name, std::size_t cin, std::size_t cout, std::size_t k, ConvGeometry g,
                       bool with_bias) {
    Conv c{std::move(name), he_normal({cout, cin, k, k}, cin * k * k, rng), Tensor{}, g};
    if (with_bias) c.bias = Tensor::zeros({cout}, true);
    net.layers_.push_back({c.name, "conv", geom_detail(k, g)});
    return c;
  };
  auto make_norm = [&](std::string name, std::size_t ch) {
    Norm n{std::move(name), Tensor::full({ch}, 1.0, true), Tensor::zeros({ch}, true), BatchNormState(ch)};
    net.layers_.push_back({n.name, "norm", std::to_string(ch)});
    return n;
  };
  auto make_act = [&](std::string name) {
    Act a{std::move(name), spec.activation, Tensor{}};
    const auto init = activation_initial_params(spec.activation);
    if (!init.empty()) a.params = Tensor::from({init.size()}, init, true);
    net.layers_.push_back({a.name, "act", std::string(to_string(spec.activation))});
    return a;
  };

  // Stem.
  const StemSpec& stem = spec.stem;
  const auto stem_w = static_cast<std::size_t>(stem.out_width);
  const auto k = static_cast<std::size_t>(detail::stem_kernel(stem));
  ConvGeometry stem_geom;
  switch (stem.kind) {
    case StemKind::ResNet:
    case StemKind::PostponedDownsampling:
      stem_geom = ConvGeometry::symmetric(2, 3);
      break;
    case StemKind::Cifar:
      stem_geom = ConvGeometry::symmetric(1, 1);
      break;
    case StemKind::Patchify:
      stem_geom = {stem.stride, (stem.patch - stem.stride) / 2, (stem.patch - stem.stride + 1) / 2};
      break;
  }
  net.stem_conv_ = make_conv("stem.conv", static_cast<std::size_t>(input.channels), stem_w, k, stem_geom, false);
  net.stem_norm_ = make_norm("stem.norm", stem_w);
  net.stem_act_ = make_act("stem.act");
  std::size_t h = conv_output_extent(static_cast<std::size_t>(input.height), k, stem_geom);
  if (stem.kind == StemKind::ResNet) {
    net.stem_pool_ = true;
    net.layers_.push_back({"stem.pool", "maxpool", "3x3/2 pad 1"});
    h = conv_output_extent(h, 3, ConvGeometry::symmetric(2, 1));
  }

  // Stages.
  const BlockSpec& bs = spec.block;
  std::size_t in = stem_w;
  for (std::size_t s = 0; s < spec.stages.size(); ++s) {
    const auto w = static_cast<std::size_t>(spec.stages[s].width);
    const auto out = static_cast<std::size_t>(block_output_width(bs, spec.stages[s].width));
    for (int d = 0; d < spec.stages[s].depth; ++d) {
      const int stride = d == 0 ? (s == 0 ? first_stride : 2) : 1;
      const std::string prefix = "stages." + std::to_string(s) + ".blocks." + std::to_string(d) + ".";
      Block b;
      struct ConvPlan {
        std::size_t cin, cout, k;
        ConvGeometry g;
      };
      std::vector<ConvPlan> plan;
      if (bs.kind == BlockKind::Basic) {
        plan = {{in, w, 3, ConvGeometry::symmetric(stride, 1)}, {w, w, 3, ConvGeometry::symmetric(1, 1)}};
      } else {
        plan = {{in, w, 1, ConvGeometry::symmetric(stride, 0)},
                {w, w, 3, ConvGeometry::symmetric(1, 1)},
                {w, out, 1, ConvGeometry::symmetric(1, 0)}};
      }
      for (std::size_t i = 0; i < plan.size(); ++i) {
        const std::string idx = std::to_string(i + 1);
        const bool normed = bs.norm_mask[i];
        b.convs.push_back(make_conv(prefix + "conv" + idx, plan[i].cin, plan[i].cout, plan[i].k, plan[i].g, !normed));
        b.norms.push_back(normed ? std::optional<Norm>(make_norm(prefix + "norm" + idx, plan[i].cout)) : std::nullopt);
        if (i == 1 && bs.se_ratio) {
          const std::size_t hid = (w + static_cast<std::size_t>(*bs.se_ratio) - 1) / static_cast<std::size_t>(*bs.se_ratio);
          SqueezeExcite se{prefix + "se", uniform_fan_in({hid, w}, w, rng), Tensor::zeros({hid}, true),
                           uniform_fan_in({w, hid}, hid, rng), Tensor::zeros({w}, true)};
          net.layers_.push_back({se.name, "se", "r=" + std::to_string(*bs.se_ratio) + " hidden=" + std::to_string(hid)});
          b.se = std::move(se);
        }
        const bool post_add = i + 1 == plan.size();
        if (!post_add)
          b.acts.push_back(bs.act_mask[i] ? std::optional<Act>(make_act(prefix + "act" + idx)) : std::nullopt);
      }
      if (in != out || stride != 1) {
        b.shortcut = make_conv(prefix + "shortcut.conv", in, out, 1, ConvGeometry::symmetric(stride, 0), false);
        b.shortcut_norm = make_norm(prefix + "shortcut.norm", out);
      }
      net.layers_.push_back({prefix + "add", "add", ""});
      const std::string last = std::to_string(plan.size());
      b.acts.push_back(bs.act_mask.back() ? std::optional<Act>(make_act(prefix + "act" + last)) : std::nullopt);
      net.blocks_.push_back(std::move(b));
      if (stride > 1) h /= static_cast<std::size_t>(stride);
      in = out;
    }
    net.stage_heights_.push_back(h);
  }

  net.layers_.push_back({"head.pool", "global_avg_pool", ""});
  const auto classes = static_cast<std::size_t>(spec.num_classes);
  net.head_weight_ = uniform_fan_in({classes, in}, in, rng);
  net.head_bias_ = Tensor::zeros({classes}, true);
  net.layers_.push_back({"head.fc", "linear", std::to_string(in) + "->" + std::to_string(classes)});
  return net;
}

Tensor Network::run_conv(const Conv& c, const Tensor& x) const { return conv2d(x, c.weight, c.bias, c.geom); }

Tensor Network::run_norm(Norm& n, const Tensor& x, Mode mode) const {
  return batchnorm(x, n.gamma, n.beta, n.state, mode);
}

Tensor Network::run_block(Block& b, const Tensor& x, Mode mode) const {
  Tensor h = x;
  for (std::size_t i = 0; i < b.convs.size(); ++i) {
    h = run_conv(b.convs[i], h);
    if (b.norms[i]) h = run_norm(*b.norms[i], h, mode);
    if (i == 1 && b.se) h = se_gate(h, b.se->w1, b.se->b1, b.se->w2, b.se->b2);
    if (i + 1 < b.convs.size() && b.acts[i]) h = activation(b.acts[i]->kind, h, b.acts[i]->params);
  }
  Tensor skip = x;
  if (b.shortcut) skip = run_norm(*b.shortcut_norm, run_conv(*b.shortcut, x), mode);
  Tensor out = add(h, skip);
  if (b.acts.back()) out = activation(b.acts.back()->kind, out, b.acts.back()->params);
  return out;
}

Tensor Network::logits(const Tensor& batch, Mode mode) {
  const Shape& s = batch.shape();
  if (s.size() != 4 || s[1] != static_cast<std::size_t>(input_.channels) ||
      s[2] != static_cast<std::size_t>(input_.height) || s[3] != static_cast<std::size_t>(input_.width))
    throw ShapeError("network expects N x " + std::to_string(input_.channels) + " x " + std::to_string(input_.height) +
                     " x " + std::to_string(input_.width) + " input, got " + shape_string(s));
  if (s[0] == 0) throw ShapeError("empty batch");

  Tensor h = run_conv(stem_conv_, batch);
  h = run_norm(stem_norm_, h, mode);
  h = activation(stem_act_.kind, h, stem_act_.params);
  if (stem_pool_) h = max_pool2d(h, 3, 2, 1);
  for (auto& b : blocks_) h = run_block(b, h, mode);
  return linear(global_avg_pool(h), head_weight_, head_bias_);
}

std::vector<Parameter> Network::parameters() const {
  std::vector<Parameter> out;
  auto conv = [&](const Conv& c) {
    out.push_back({c.name + ".weight", c.weight, ParamGroup::Decay});
    if (c.bias.defined()) out.push_back({c.name + ".bias", c.bias, ParamGroup::Decay});
  };
  auto norm = [&](const Norm& n) {
    out.push_back({n.name + ".gamma", n.gamma, ParamGroup::NoDecay});
    out.push_back({n.name + ".beta", n.beta, ParamGroup::NoDecay});
  };
  auto act = [&](const Act& a) {
    if (a.params.defined()) out.push_back({a.name + ".params", a.params, ParamGroup::NoDecay});
  };

  conv(stem_conv_);
  norm(stem_norm_);
  act(stem_act_);
  for (const auto& b : blocks_) {
    for (std::size_t i = 0; i < b.convs.size(); ++i) {
      conv(b.convs[i]);
      if (b.norms[i]) norm(*b.norms[i]);
      if (i == 1 && b.se) {
        out.push_back({b.se->name + ".fc1.weight", b.se->w1, ParamGroup::Decay});
        out.push_back({b.se->name + ".fc1.bias", b.se->b1, ParamGroup::Decay});
        out.push_back({b.se->name + ".fc2.weight", b.se->w2, ParamGroup::Decay});
        out.push_back({b.se->name + ".fc2.bias", b.se->b2, ParamGroup::Decay});
      }
      if (b.acts[i]) act(*b.acts[i]);
    }
    if (b.acts.size() > b.convs.size() && b.acts.back()) act(*b.acts.back());
    if (b.shortcut) {
      conv(*b.shortcut);
      norm(*b.shortcut_norm);
    }
  }
  out.push_back({"head.fc.weight", head_weight_, ParamGroup::Decay});
  out.push_back({"head.fc.bias", head_bias_, ParamGroup::Decay});
  return out;
}

template <typename Fn>
void Network::for_each_norm(Fn&& fn) {
  fn(stem_norm_);
  for (auto& b : blocks_) {
    for (auto& n : b.norms)
      if (n) fn(*n);
    if (b.shortcut_norm) fn(*b.shortcut_norm);
  }
}

template <typename Fn>
void Network::for_each_norm(Fn&& fn) const {
  const_cast<Network*>(this)->for_each_norm([&](const Norm& n) { fn(n); });
}

Network Network::clone() const {
  Network out = *this;
  auto dup = [&](Tensor& t) {
    if (!t.defined()) return;
    Tensor c = t.detach();
    c.set_requires_grad(t.requires_grad());
    t = c;
  };
  auto conv = [&](Conv& c) {
    dup(c.weight);
    dup(c.bias);
  };
  auto norm = [&](Norm& n) {
    dup(n.gamma);
    dup(n.beta);
  };
  conv(out.stem_conv_);
  norm(out.stem_norm_);
  dup(out.stem_act_.params);
  for (auto& b : out.blocks_) {
    for (auto& c : b.convs) conv(c);
    for (auto& n : b.norms)
      if (n) norm(*n);
    for (auto& a : b.acts)
      if (a) dup(a->params);
    if (b.se) {
      dup(b.se->w1);
      dup(b.se->b1);
      dup(b.se->w2);
      dup(b.se->b2);
    }
    if (b.shortcut) {
      conv(*b.shortcut);
      norm(*b.shortcut_norm);
    }
  }
  dup(out.head_weight_);
  dup(out.head_bias_);
  return out;
}

std::unique_ptr<Model> Network::clone_model() const { return std::make_unique<Network>(clone()); }

std::vector<NamedTensor> Network::state() const {
  std::vector<NamedTensor> out;
  for (const auto& p : parameters())
    out.push_back({p.name, p.tensor.shape(), {p.tensor.values().begin(), p.tensor.values().end()}});
  for_each_norm([&](const Norm& n) {
    const std::size_t c = n.state.running_mean.size();
    out.push_back({n.name + ".running_mean", {c}, n.state.running_mean});
    out.push_back({n.name + ".running_var", {c}, n.state.running_var});
  });
  return out;
}

void Network::load_state(const std::vector<NamedTensor>& tensors) {
  std::map<std::string, const NamedTensor*> by_name;
  for (const auto& t : tensors) by_name[t.name] = &t;
  auto take = [&](const std::string& name, const Shape& shape) -> const NamedTensor& {
    const auto it = by_name.find(name);
    if (it == by_name.end()) throw FormatError("snapshot lacks tensor '" + name + "'");
    if (it->second->shape != shape)
      throw ShapeError("snapshot tensor '" + name + "' has shape " + shape_string(it->second->shape) + ", expected " +
                       shape_string(shape));
    return *it->second;
  };
  for (auto& p : parameters()) {
    const auto& t = take(p.name, p.tensor.shape());
    std::copy(t.values.begin(), t.values.end(), p.tensor.mutable_values().begin());
  }
  for_each_norm([&](Norm& n) {
    const Shape shape{n.state.running_mean.size()};
    n.state.running_mean = take(n.name + ".running_mean", shape).values;
    n.state.running_var = take(n.name + ".running_var", shape).values;
  });
}

Tensor forward(Network& net, const Tensor& batch, Mode mode) {
  if (mode == Mode::Eval) {
    NoGradGuard no_grad;
    return net.logits(batch, mode);
  }
  return net.logits(batch, mode);
}

LayerTable describe(const Network& net) {
  LayerTable table;
  for (const auto& p : net.parameters()) {
    const std::size_t count = p.tensor.numel();
    table.rows.push_back({p.name, p.tensor.shape(), count});
    table.total += static_cast<std::int64_t>(count);
  }
  return table;
}

void write_describe_text(std::ostream& out, const LayerTable& table) {
  std::size_t name_w = 5, shape_w = 5;
  for (const auto& r : table.rows) {
    name_w = std::max(name_w, r.name.size());
    shape_w = std::max(shape_w, shape_string(r.shape).size());
  }
  out << std::left << std::setw(static_cast<int>(name_w)) << "name" << "  " << std::setw(static_cast<int>(shape_w))
      << "shape" << "  " << std::right << std::setw(12) << "count" << '\n';
  for (const auto& r : table.rows)
    out << std::left << std::setw(static_cast<int>(name_w)) << r.name << "  " << std::setw(static_cast<int>(shape_w))
        << shape_string(r.shape) << "  " << std::right << std::setw(12) << r.count << '\n';
  out << std::left << std::setw(static_cast<int>(name_w)) << "total" << "  " << std::setw(static_cast<int>(shape_w))
      << "" << "  " << std::right << std::setw(12) << table.total << '\n';
}

void write_describe_csv(std::ostream& out, const LayerTable& table) {
  out << "name,shape,count\n";
  for (const auto& r : table.rows) {
    std::string shape;
    for (std::size_t i = 0; i < r.shape.size(); ++i) shape += (i ? "x" : "") + std::to_string(r.shape[i]);
    out << csv::field(r.name) << ',' << shape << ',' << r.count << '\n';
  }
  out << "total,," << table.total << '\n';
}

}  // namespace robarch
