#include "robarch/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cinttypes>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <sstream>

#include "robarch/adversarial.hpp"
#include "robarch/archspec.hpp"
#include "robarch/csv.hpp"
#include "robarch/dataset.hpp"
#include "robarch/designspace.hpp"
#include "robarch/errors.hpp"
#include "robarch/netbuild.hpp"
#include "robarch/snapshot.hpp"

namespace robarch {

namespace {

std::vector<int> parse_int_list(const std::string& text, const std::string& what) {
  std::vector<int> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stoi(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw ParamError("bad integer '" + item + "' in " + what);
    }
  }
  if (out.empty()) throw ParamError(what + " is empty");
  return out;
}

// "3,4,6,3:64,128,256,512"
std::vector<StageSpec> parse_stages(const std::string& text) {
  const auto colon = text.find(':');
  if (colon == std::string::npos) throw ParamError("stages must look like D1,D2,...:W1,W2,...");
  const auto d = parse_int_list(text.substr(0, colon), "stage depths");
  const auto w = parse_int_list(text.substr(colon + 1), "stage widths");
  if (d.size() != w.size()) throw ParamError("stage depth and width lists differ in length");
  std::vector<StageSpec> out;
  for (std::size_t i = 0; i < d.size(); ++i) out.push_back({d[i], w[i]});
  return out;
}

// "3x32x32"
std::vector<int> parse_dims(const std::string& text) {
  std::string t = text;
  std::replace(t.begin(), t.end(), 'x', ',');
  auto dims = parse_int_list(t, "shape");
  if (dims.size() != 3 || std::any_of(dims.begin(), dims.end(), [](int v) { return v < 1; }))
    throw ParamError("shape must be CxHxW with positive entries, got '" + text + "'");
  return dims;
}

void write_to(const std::string& path, std::ostream& fallback, const std::function<void(std::ostream&)>& fn) {
  if (path.empty() || path == "-") {
    fn(fallback);
    return;
  }
  std::ofstream file(path, std::ios::binary);
  if (!file) throw IoError("cannot write '" + path + "'");
  fn(file);
  if (!file) throw IoError("failed writing '" + path + "'");
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016" PRIx64, v);
  return buf;
}

struct DataArgs {
  std::string path;
  std::string shape = "3x32x32";
  int classes = 10;
  std::size_t limit = 0;

  void add_to(CLI::App* cmd) {
    cmd->add_option("--data", path, "Binary records file (label byte + CxHxW pixel bytes)")->required();
    cmd->add_option("--shape", shape, "Image shape CxHxW")->capture_default_str();
    cmd->add_option("--classes", classes, "Number of classes in the records")->capture_default_str();
    cmd->add_option("--limit", limit, "Read at most this many records (0 = all)")->capture_default_str();
  }
  Dataset load() const {
    const auto d = parse_dims(shape);
    RecordLayout layout{static_cast<std::size_t>(d[0]), static_cast<std::size_t>(d[1]), static_cast<std::size_t>(d[2]),
                        classes};
    return load_records(path, layout, limit);
  }
};

InputShape input_of(const Dataset& data) {
  return {static_cast<int>(data.channels), static_cast<int>(data.height), static_cast<int>(data.width)};
}

std::vector<double> parse_double_list(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw ParamError("bad number '" + item + "'");
    }
  }
  if (out.empty()) throw ParamError("empty number list");
  return out;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Robust CNN architecture workbench", "robarch"};
  app.require_subcommand(1);
  app.fallthrough(false);
  std::function<void()> action;

  // wd-ratio
  std::string spec_path;
  auto* wd_cmd = app.add_subcommand("wd-ratio", "Print the width-depth ratio of a spec");
  wd_cmd->add_option("spec", spec_path, "Spec file")->required();
  int precision = 2;
  wd_cmd->add_option("--precision", precision, "Digits after the decimal point")->capture_default_str();
  wd_cmd->callback([&] {
    action = [&] {
      char buf[64];
      std::snprintf(buf, sizeof buf, "%.*f", std::clamp(precision, 0, 17), wd_ratio(load_spec_file(spec_path)));
      out << buf << '\n';
    };
  });

  // params
  auto* params_cmd = app.add_subcommand("params", "Print the analytic parameter count of a spec");
  params_cmd->add_option("spec", spec_path, "Spec file")->required();
  int input_channels = 3;
  bool millions = false;
  params_cmd->add_option("--input-channels", input_channels, "Input image channels")->capture_default_str();
  params_cmd->add_flag("--millions", millions, "Print in millions with two decimals");
  params_cmd->callback([&] {
    action = [&] {
      const auto n = count_params(load_spec_file(spec_path), input_channels);
      if (millions) {
        char buf[64];
        std::snprintf(buf, sizeof buf, "%.2fM", static_cast<double>(n) / 1e6);
        out << buf << '\n';
      } else {
        out << n << '\n';
      }
    };
  });

  // validate
  auto* validate_cmd = app.add_subcommand("validate", "Check a spec file");
  validate_cmd->add_option("spec", spec_path, "Spec file")->required();
  validate_cmd->callback([&] {
    action = [&] {
      const auto spec = load_spec_file(spec_path);
      out << "ok " << spec.name << '\n';
    };
  });

  // robustify
  auto* rob_cmd = app.add_subcommand("robustify", "Apply robust-design transforms to a spec");
  rob_cmd->add_option("spec", spec_path, "Spec file")->required();
  bool rob_all = false;
  std::string rob_step, rob_stages, out_path;
  auto* all_flag = rob_cmd->add_flag("--all", rob_all, "Apply every transform in roadmap order");
  auto* step_opt = rob_cmd->add_option("--step", rob_step, "One transform: depth-width, conv-stem, se, smooth-act");
  all_flag->excludes(step_opt);
  rob_cmd->add_option("--stages", rob_stages, "Explicit stage table D1,..,Dn:W1,..,Wn for depth-width");
  rob_cmd->add_option("-o,--output", out_path, "Output spec file (default stdout)");
  rob_cmd->callback([&] {
    action = [&] {
      const auto spec = load_spec_file(spec_path);
      std::optional<std::vector<StageSpec>> stages;
      if (!rob_stages.empty()) stages = parse_stages(rob_stages);
      ArchitectureSpec result;
      if (rob_all) {
        result = robustify_all(spec, stages);
      } else if (!rob_step.empty()) {
        const auto p = parse_principle(rob_step);
        if (!p) throw ParamError("unknown transform '" + rob_step + "'");
        result = robustify_step(spec, *p, stages);
      } else {
        throw CLI::RequiredError("robustify needs --all or --step");
      }
      write_to(out_path, out, [&](std::ostream& o) { o << emit_spec(result); });
    };
  });

  // registry
  auto* reg_cmd = app.add_subcommand("registry", "List the built-in architectures or emit one as a spec");
  std::string reg_name;
  bool reg_robust = false;
  reg_cmd->add_option("name", reg_name, "Architecture to emit, base or robust name (omit to list)");
  reg_cmd->add_flag("--robust", reg_robust, "Emit the robust counterpart");
  reg_cmd->callback([&] {
    action = [&] {
      if (reg_name.empty()) {
        out << "name,robust_name,reported_params_millions,reported_wd_ratio\n";
        for (const auto& e : registry())
          out << e.base_name << ',' << e.robust.name << ',' << csv::number(e.reported_params_millions) << ','
              << csv::number(e.reported_wd_ratio) << '\n';
        return;
      }
      const RegistryEntry* e = find_registry_entry(reg_name);
      if (!e) throw SpecError("no built-in architecture named '" + reg_name + "'");
      out << emit_spec(reg_robust || reg_name == e->robust.name ? e->robust : e->baseline);
    };
  });

  // sample
  auto* sample_cmd = app.add_subcommand("sample", "Draw seeded configurations from the design space");
  std::uint64_t seed = 0;
  std::size_t count = 100;
  std::string n_choices = "3,4,5,6", template_path;
  SampleBounds bounds;
  std::int64_t budget_lo = 0, budget_hi = 0;
  sample_cmd->add_option("--seed", seed, "Base seed; sample i uses seed + i")->required();
  sample_cmd->add_option("--count", count, "Number of samples")->capture_default_str();
  sample_cmd->add_option("--n-choices", n_choices, "Allowed stage counts")->capture_default_str();
  sample_cmd->add_option("--max-depth", bounds.max_depth, "Largest stage depth")->capture_default_str();
  sample_cmd->add_option("--max-width", bounds.max_width, "Largest stage width")->capture_default_str();
  auto* blo = sample_cmd->add_option("--budget-min", budget_lo, "Lower parameter budget");
  auto* bhi = sample_cmd->add_option("--budget-max", budget_hi, "Upper parameter budget");
  blo->needs(bhi);
  bhi->needs(blo);
  sample_cmd->add_option("--template", template_path, "Spec providing stem, block, activation and head");
  sample_cmd->add_option("-o,--output", out_path, "Output CSV (default stdout)");
  sample_cmd->callback([&] {
    action = [&] {
      const auto choices = parse_int_list(n_choices, "--n-choices");
      bounds.n_choices = {choices.begin(), choices.end()};
      if (budget_hi > 0) bounds.param_budget = std::make_pair(budget_lo, budget_hi);
      ArchitectureSpec templ = template_path.empty() ? registry().front().baseline : load_spec_file(template_path);
      std::vector<DesignSample> samples;
      samples.reserve(count);
      for (std::size_t i = 0; i < count; ++i) samples.push_back(sample_config(seed + i, bounds, templ));
      write_to(out_path, out, [&](std::ostream& o) { write_samples_csv(o, samples); });
    };
  });

  // edf
  auto* edf_cmd = app.add_subcommand("edf", "Empirical distribution of errors from a samples CSV");
  std::string edf_input, edf_column = "error";
  double range_lo = 0.0, range_hi = 0.0;
  edf_cmd->add_option("--input", edf_input, "CSV with a header row")->required();
  edf_cmd->add_option("--column", edf_column, "Error column")->capture_default_str();
  auto* rlo = edf_cmd->add_option("--range-lo", range_lo, "Split into in-range/out-of-range by WD ratio");
  auto* rhi = edf_cmd->add_option("--range-hi", range_hi, "Upper end of the WD range");
  rlo->needs(rhi);
  rhi->needs(rlo);
  edf_cmd->add_option("-o,--output", out_path, "Output CSV (default stdout)");
  edf_cmd->callback([&] {
    action = [&] {
      std::ifstream in(edf_input, std::ios::binary);
      if (!in) throw IoError("cannot open '" + edf_input + "'");
      std::string line;
      if (!std::getline(in, line)) throw FormatError("'" + edf_input + "' is empty");
      const auto header = csv::split_line(line);
      const auto col = std::find(header.begin(), header.end(), edf_column);
      if (col == header.end()) throw FormatError("no column '" + edf_column + "' in '" + edf_input + "'");
      const auto ci = static_cast<std::size_t>(col - header.begin());
      const auto wd_col = std::find(header.begin(), header.end(), "wd");
      const bool split = rlo->count() > 0;
      if (split && wd_col == header.end()) throw FormatError("range split needs a 'wd' column");
      std::map<std::string, std::vector<double>> groups;
      int row = 1;
      while (std::getline(in, line)) {
        ++row;
        if (line.empty()) continue;
        const auto cells = csv::split_line(line);
        if (cells.size() != header.size()) throw FormatError("row " + std::to_string(row) + " has the wrong cell count");
        if (cells[ci].empty()) continue;
        double e = 0.0;
        try {
          e = std::stod(cells[ci]);
        } catch (const std::exception&) {
          throw FormatError("row " + std::to_string(row) + ": bad number '" + cells[ci] + "'");
        }
        groups["all"].push_back(e);
        if (split) {
          const double wd = std::stod(cells[static_cast<std::size_t>(wd_col - header.begin())]);
          groups[wd >= range_lo && wd <= range_hi ? "in-range" : "out-of-range"].push_back(e);
        }
      }
      write_to(out_path, out, [&](std::ostream& o) {
        write_edf_header(o);
        for (const auto& [name, errors] : groups) write_edf_csv(o, compute_edf(errors), name);
      });
    };
  });

  // build-describe
  auto* desc_cmd = app.add_subcommand("build-describe", "Build a spec and list its parameter tensors");
  desc_cmd->add_option("spec", spec_path, "Spec file")->required();
  std::string input_shape = "3x32x32", format = "text";
  desc_cmd->add_option("--input", input_shape, "Input shape CxHxW")->capture_default_str();
  desc_cmd->add_option("--format", format, "text or csv")->check(CLI::IsMember({"text", "csv"}))->capture_default_str();
  desc_cmd->add_option("--seed", seed, "Initialization seed")->required();
  desc_cmd->callback([&] {
    action = [&] {
      const auto d = parse_dims(input_shape);
      const Network net = build_network(load_spec_file(spec_path), {d[0], d[1], d[2]}, seed);
      const auto table = describe(net);
      if (format == "csv")
        write_describe_csv(out, table);
      else
        write_describe_text(out, table);
    };
  });

  // gen-data
  auto* gen_cmd = app.add_subcommand("gen-data", "Write a synthetic dataset as binary records");
  std::size_t gen_n = 2000, gen_size = 16;
  int gen_classes = 2;
  SyntheticOptions synth;
  gen_cmd->add_option("--seed", seed, "Sampling seed")->required();
  gen_cmd->add_option("--n", gen_n, "Number of images")->capture_default_str();
  gen_cmd->add_option("--size", gen_size, "Image side length")->capture_default_str();
  gen_cmd->add_option("--classes", gen_classes, "Number of classes")->capture_default_str();
  gen_cmd->add_option("--channels", synth.channels, "Image channels")->capture_default_str();
  gen_cmd->add_option("--noise", synth.noise, "Pixel noise standard deviation")->capture_default_str();
  gen_cmd->add_option("--blob", synth.blob_amplitude, "Class blob amplitude")->capture_default_str();
  gen_cmd->add_option("--texture", synth.texture_amplitude, "Class texture amplitude")->capture_default_str();
  gen_cmd->add_option("-o,--output", out_path, "Output records file")->required();
  gen_cmd->callback([&] {
    action = [&] {
      const Dataset data = gen_synthetic(seed, gen_n, gen_size, gen_classes, synth);
      save_records(out_path, data);
      out << data.size() << " records " << data.channels << 'x' << data.height << 'x' << data.width << " hash "
          << hex64(dataset_hash(data)) << '\n';
    };
  });

  // train
  auto* train_cmd = app.add_subcommand("train", "Train a network built from a spec");
  train_cmd->add_option("spec", spec_path, "Spec file")->required();
  DataArgs data_args;
  data_args.add_to(train_cmd);
  TrainConfig tc;
  std::string method = "standard", csv_path, weights_path;
  double eps = 0.0, alpha = 0.0, eval_eps = 0.0;
  int steps = 10, eval_steps = 10;
  train_cmd->add_option("--seed", tc.seed, "Initialization, shuffling and attack seed")->required();
  train_cmd->add_option("--method", method, "standard, fast-at, sat or trades")->capture_default_str();
  train_cmd->add_option("--epochs", tc.epochs, "Epochs")->capture_default_str();
  train_cmd->add_option("--batch-size", tc.batch_size, "Mini-batch size")->capture_default_str();
  train_cmd->add_option("--lr-max", tc.lr_max, "Peak of the cyclic learning rate")->capture_default_str();
  train_cmd->add_option("--weight-decay", tc.weight_decay, "Weight decay")->capture_default_str();
  train_cmd->add_option("--beta", tc.trades_beta, "TRADES trade-off")->capture_default_str();
  train_cmd->add_option("--eps", eps, "Training attack budget")->capture_default_str();
  train_cmd->add_option("--steps", steps, "Inner attack steps (sat, trades)")->capture_default_str();
  train_cmd->add_option("--alpha", alpha, "Inner attack step size (default from the method)");
  train_cmd->add_option("--eval-eps", eval_eps, "Per-epoch robust accuracy budget")->capture_default_str();
  train_cmd->add_option("--eval-steps", eval_steps, "Per-epoch robust accuracy steps")->capture_default_str();
  train_cmd->add_option("--monitor", tc.monitor_samples, "Samples scored after each epoch (0 = all)")
      ->capture_default_str();
  train_cmd->add_option("--csv", csv_path, "Per-epoch report CSV (default stdout)");
  train_cmd->add_option("--weights", weights_path, "Write the trained weights snapshot here");
  train_cmd->callback([&] {
    action = [&] {
      tc.method = parse_train_method(method);
      tc.attack = tc.method == TrainMethod::FastAT ? AttackConfig::fast_at(eps) : AttackConfig::pgd(eps, steps, true, false);
      if (alpha > 0.0) tc.attack.alpha = alpha;
      tc.eval_attack = AttackConfig::pgd(eval_eps, eval_steps);
      const Dataset data = data_args.load();
      Network net = build_network(load_spec_file(spec_path), input_of(data), tc.seed);
      const TrainReport report = train(net, data, tc);
      write_to(csv_path, out, [&](std::ostream& o) { write_train_csv(o, report); });
      if (!weights_path.empty()) save_snapshot(weights_path, net.state());
      (csv_path.empty() ? err : out) << "parameter_hash " << hex64(parameter_hash(net)) << '\n';
    };
  });

  // attack
  auto* attack_cmd = app.add_subcommand("attack", "Attack every sample and report per-sample outcomes");
  attack_cmd->add_option("spec", spec_path, "Spec file")->required();
  DataArgs attack_data;
  attack_data.add_to(attack_cmd);
  attack_cmd->add_option("--weights", weights_path, "Weights snapshot")->required();
  attack_cmd->add_option("--seed", seed, "Random-start seed")->required();
  attack_cmd->add_option("--eps", eps, "Attack budget")->required();
  attack_cmd->add_option("--steps", steps, "Attack steps")->capture_default_str();
  attack_cmd->add_option("--alpha", alpha, "Step size (default 2.5*eps/steps)");
  attack_cmd->add_option("-o,--output", out_path, "Output CSV (default stdout)");
  attack_cmd->callback([&] {
    action = [&] {
      const Dataset data = attack_data.load();
      Network net = build_network(load_spec_file(spec_path), input_of(data), 0);
      net.load_state(load_snapshot(weights_path));
      AttackConfig cfg = AttackConfig::pgd(eps, steps);
      if (alpha > 0.0) cfg.alpha = alpha;
      Rng rng(seed);
      std::vector<std::size_t> all(data.size());
      for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
      write_to(out_path, out, [&](std::ostream& o) {
        o << "index,label,clean_pred,adv_pred,linf\n";
        constexpr std::size_t kBatch = 100;
        for (std::size_t begin = 0; begin < data.size(); begin += kBatch) {
          const std::size_t n = std::min(kBatch, data.size() - begin);
          const Tensor x = data.images(begin, n);
          const std::span<const int> y(data.labels.data() + begin, n);
          const Tensor xa = pgd(net, x, y, cfg, rng);
          std::vector<int> clean_pred, adv_pred;
          {
            NoGradGuard no_grad;
            clean_pred = argmax_rows(net.logits(x, Mode::Eval));
            adv_pred = argmax_rows(net.logits(xa, Mode::Eval));
          }
          const std::size_t m = data.image_numel();
          for (std::size_t i = 0; i < n; ++i) {
            double linf = 0.0;
            for (std::size_t j = 0; j < m; ++j)
              linf = std::max(linf, std::abs(xa.values()[i * m + j] - x.values()[i * m + j]));
            o << begin + i << ',' << y[i] << ',' << clean_pred[i] << ',' << adv_pred[i] << ',' << csv::number(linf)
              << '\n';
          }
        }
      });
    };
  });

  // evaluate
  auto* eval_cmd = app.add_subcommand("evaluate", "Robust accuracy over a list of budgets");
  eval_cmd->add_option("spec", spec_path, "Spec file")->required();
  DataArgs eval_data;
  eval_data.add_to(eval_cmd);
  std::string eps_list = "0";
  unsigned workers = 1;
  eval_cmd->add_option("--weights", weights_path, "Weights snapshot")->required();
  eval_cmd->add_option("--seed", seed, "Random-start seed")->required();
  eval_cmd->add_option("--eps", eps_list, "Comma-separated budgets")->capture_default_str();
  eval_cmd->add_option("--steps", steps, "Attack steps")->capture_default_str();
  eval_cmd->add_option("--workers", workers, "Evaluation threads")->capture_default_str();
  eval_cmd->add_option("-o,--output", out_path, "Output CSV (default stdout)");
  eval_cmd->callback([&] {
    action = [&] {
      const Dataset data = eval_data.load();
      Network net = build_network(load_spec_file(spec_path), input_of(data), 0);
      net.load_state(load_snapshot(weights_path));
      const auto budgets = parse_double_list(eps_list);
      write_to(out_path, out, [&](std::ostream& o) {
        o << "eps,steps,accuracy\n";
        for (double e : budgets)
          o << csv::number(e) << ',' << steps << ','
            << csv::number(evaluate_robust(net, data, AttackConfig::pgd(e, steps), seed, 100, workers)) << '\n';
      });
    };
  });

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err) == 0 ? kExitOk : kExitUsage;
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err) == 0 ? kExitOk : kExitUsage;
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    if (app.get_subcommands().empty()) err << app.help();
    return kExitUsage;
  }

  try {
    if (action) action();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "usage error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return kExitDomainError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitDomainError;
  }
}

}  // namespace robarch
