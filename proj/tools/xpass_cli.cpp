#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "xpass/xpass.hpp"

using namespace xpass;

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitData = 3;

ZoneGrid grid_from(const std::string& name) { return ZoneGrid::of(parse_grid_scheme(name)); }

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path);
  return out;
}

struct IngestArgs {
  std::string home, away, events, grid = "coarse", out;
  std::uint64_t seed = 0;
};

int run_ingest(const IngestArgs& a) {
  auto r = data::ingest(a.home, a.away, a.events, grid_from(a.grid), a.seed);
  for (const auto& w : r.warnings) std::cerr << "warning: " << w << '\n';
  data::save_dataset(std::filesystem::path(a.out), r.dataset);
  const auto& s = r.stats;
  std::cout << "parsed_passes=" << s.parsed_passes << '\n'
            << "emitted=" << s.emitted << '\n'
            << "skipped_history=" << s.skipped_history << '\n'
            << "skipped_gap=" << s.skipped_gap << '\n'
            << "skipped_missing_end=" << s.skipped_missing_end << '\n'
            << "non_pass_events=" << s.non_pass_events << '\n'
            << "conserved=" << (s.conserved() ? "true" : "false") << '\n';
  return 0;
}

struct SynthArgs {
  std::size_t n = 0;
  std::uint64_t seed = 0;
  std::string grid = "coarse", out;
  std::vector<std::size_t> split;
};

int run_synth(const SynthArgs& a) {
  std::optional<data::SplitSizes> sizes;
  if (!a.split.empty()) {
    if (a.split.size() != 3) throw UsageError("--split takes three counts: train,val,test");
    sizes = data::SplitSizes{a.split[0], a.split[1], a.split[2]};
    if (sizes->total() != a.n) {
      throw UsageError("--split counts add up to " + std::to_string(sizes->total()) + ", not --n " +
                       std::to_string(a.n));
    }
  }
  const auto ds = data::synth_dataset(a.n, a.seed, grid_from(a.grid), sizes);
  data::save_dataset(std::filesystem::path(a.out), ds);
  std::cout << "samples=" << ds.samples.size() << '\n'
            << "train=" << ds.split_sizes.train << '\n'
            << "val=" << ds.split_sizes.val << '\n'
            << "test=" << ds.split_sizes.test << '\n';
  return 0;
}

struct TrainArgs {
  std::string dataset, out, mode = "probsparse";
  std::size_t d_model = 512, heads = 8, stacks = 2, blocks = 3, factor = 5, batch = 32, epochs = 30, patience = 5;
  double lr = 1e-4;
  std::uint64_t seed = 0;
};

int run_train(const TrainArgs& a) {
  const auto ds = data::load_dataset(std::filesystem::path(a.dataset));
  model::ModelConfig mc;
  mc.d_model = a.d_model;
  mc.n_heads = a.heads;
  mc.n_stacks = a.stacks;
  mc.blocks_per_stack = a.blocks;
  mc.sampling_factor = a.factor;
  mc.mode = parse_attention_mode(a.mode);
  mc.grid = ds.grid;
  mc.input_dim = ds.feature_dim;
  mc.seq_len = ds.seq_len;
  mc.context_dim = ds.context_dim;
  mc.seed = a.seed;
  harness::TrainConfig tc;
  tc.lr = a.lr;
  tc.batch_size = a.batch;
  tc.max_epochs = a.epochs;
  tc.patience = a.patience;
  tc.seed = a.seed;

  const auto tr = ds.subset(data::Split::Train), va = ds.subset(data::Split::Val);
  std::cout << std::setprecision(6) << std::fixed;
  const auto res = harness::train<float>(tr, va, mc, tc, [](const harness::EpochRecord& r) {
    std::cout << "epoch=" << r.epoch << " train_loss=" << r.train_loss << " val_loss=" << r.val_loss << std::endl;
  });
  auto info = res.summary();
  info["lr"] = tc.lr;
  info["batch_size"] = tc.batch_size;
  info["max_epochs"] = tc.max_epochs;
  info["patience"] = tc.patience;
  info["train_seed"] = tc.seed;
  info["dataset_seed"] = ds.seed;
  model::save_checkpoint(std::filesystem::path(a.out), res.best, info);
  std::cout << "best_epoch=" << res.best_epoch << '\n'
            << "best_val_loss=" << res.best_val_loss << '\n'
            << "stopped_early=" << (res.stopped_early ? "true" : "false") << '\n'
            << "parameters=" << const_cast<model::ModelWeights<float>&>(res.best.weights).parameter_count() << '\n';
  return 0;
}

struct EvalArgs {
  std::string model, dataset, split = "test";
};

int run_eval(const EvalArgs& a) {
  const auto split = data::parse_split(a.split);
  const auto ck = model::load_checkpoint<float>(std::filesystem::path(a.model));
  const auto ds = data::load_dataset(std::filesystem::path(a.dataset));
  const auto r = harness::evaluate(ck.model, ds, split);
  auto& out = std::cout;
  out << std::fixed << std::setprecision(4);
  out << "split " << a.split << ", " << r.count << " samples, grid " << to_string(ds.grid.scheme) << "\n\n";
  out << std::left << std::setw(8) << "axis" << std::right << std::setw(9) << "top1" << std::setw(9) << "top3"
      << std::setw(9) << "top5" << '\n';
  const std::pair<const char*, const harness::TopK*> rows[] = {{"x", &r.x}, {"y", &r.y}, {"joint", &r.joint}};
  for (const auto& [name, t] : rows) {
    out << std::left << std::setw(8) << name << std::right << std::setw(9) << t->top1 << std::setw(9) << t->top3
        << std::setw(9) << t->top5 << '\n';
  }
  out << "\nCEL " << r.mean_cel << " (x " << r.cel_x << ", y " << r.cel_y << ")\n\n";
  out << std::setprecision(6);
  out << "split=" << a.split << '\n' << "samples=" << r.count << '\n';
  out << "cel=" << r.mean_cel << '\n' << "cel_x=" << r.cel_x << '\n' << "cel_y=" << r.cel_y << '\n';
  for (const auto& [name, t] : rows) {
    out << "top1_" << name << '=' << t->top1 << '\n'
        << "top3_" << name << '=' << t->top3 << '\n'
        << "top5_" << name << '=' << t->top5 << '\n';
  }
  return 0;
}

struct HeatmapArgs {
  std::string model, dataset, event, out;
};

int run_heatmap(const HeatmapArgs& a) {
  const auto ck = model::load_checkpoint<float>(std::filesystem::path(a.model));
  const auto ds = data::load_dataset(std::filesystem::path(a.dataset));
  if (!(ds.grid == ck.model.config.grid)) throw ConfigError("checkpoint and dataset use different grids");
  const auto& sample = ds.find(a.event);
  const auto h = ck.model.predict(sample);
  auto out = open_out(a.out);
  out << std::setprecision(10);
  for (std::size_t i = 0; i < h.nx; ++i) {
    for (std::size_t j = 0; j < h.ny; ++j) out << (j ? "," : "") << h(i, j);
    out << '\n';
  }
  const auto am = h.argmax();
  std::cout << "event=" << a.event << '\n' << "argmax_x=" << am.zx << '\n' << "argmax_y=" << am.zy << '\n';
  std::cout << std::setprecision(6) << std::fixed << "argmax_p=" << h(am.zx, am.zy) << '\n';
  return 0;
}

struct CounterfactualArgs {
  std::string model, dataset, event, out;
  std::size_t entity = 0;
  double dx = 0.0, dy = 0.0;
};

int run_counterfactual(const CounterfactualArgs& a) {
  const auto ck = model::load_checkpoint<float>(std::filesystem::path(a.model));
  const auto ds = data::load_dataset(std::filesystem::path(a.dataset));
  if (!(ds.grid == ck.model.config.grid)) throw ConfigError("checkpoint and dataset use different grids");
  const auto r = harness::counterfactual_diff(ck.model, ds.find(a.event), a.entity, a.dx, a.dy);
  auto out = open_out(a.out);
  out << "zx,zy,original,perturbed\n" << std::setprecision(10);
  for (std::size_t i = 0; i < r.original.nx; ++i)
    for (std::size_t j = 0; j < r.original.ny; ++j)
      out << i << ',' << j << ',' << r.original(i, j) << ',' << r.perturbed(i, j) << '\n';
  const auto a0 = r.original.argmax(), a1 = r.perturbed.argmax();
  std::cout << "event=" << a.event << '\n' << "entity=" << a.entity << '\n';
  std::cout << std::setprecision(9) << "divergence=" << r.divergence << '\n';
  std::cout << "argmax_original=" << a0.zx << ',' << a0.zy << '\n'
            << "argmax_perturbed=" << a1.zx << ',' << a1.zy << '\n'
            << "argmax_changed=" << (a0 == a1 ? "false" : "true") << '\n';
  return 0;
}

struct BenchArgs {
  std::vector<std::size_t> lengths{64, 128, 256, 512, 1024};
  std::size_t factor = 5, dim = 64;
  std::uint64_t seed = 0;
};

int run_bench(const BenchArgs& a) {
  if (a.lengths.empty()) throw UsageError("--lengths is empty");
  AttentionConfig cfg;
  cfg.sampling_factor = a.factor;
  cfg.validate();
  using clock = std::chrono::steady_clock;
  std::cout << "length,canonical_dot_products,probsparse_dot_products,l_ln_l,canonical_ms,probsparse_ms\n";
  for (std::size_t len : a.lengths) {
    if (len < 2) throw UsageError("lengths must be >= 2");
    Rng rng(mix_seed(a.seed, len));
    auto make = [&] {
      Tensor<float> t({len, a.dim});
      for (auto& v : t.data()) v = static_cast<float>(rng.normal());
      return t;
    };
    const auto q = make(), k = make(), v = make();
    NoGradGuard guard;
    AttentionStats dense, sparse;
    auto t0 = clock::now();
    canonical_attention(q, k, v, &dense);
    auto t1 = clock::now();
    probsparse_attention(q, k, v, cfg, mix_seed(a.seed, 7), &sparse);
    auto t2 = clock::now();
    const double ms_dense = std::chrono::duration<double, std::milli>(t1 - t0).count();
    const double ms_sparse = std::chrono::duration<double, std::milli>(t2 - t1).count();
    std::cout << len << ',' << dense.dot_products << ',' << sparse.dot_products << ',' << std::fixed
              << std::setprecision(3) << double(len) * std::log(double(len)) << ',' << ms_dense << ',' << ms_sparse
              << std::defaultfloat << '\n';
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"xpass: pass end-location prediction from tracking windows"};
  app.require_subcommand(1);

  IngestArgs ia;
  auto* ingest = app.add_subcommand("ingest", "Build a dataset from Metrica-format tracking and event CSVs");
  ingest->add_option("--tracking-home", ia.home, "Home tracking CSV")->required();
  ingest->add_option("--tracking-away", ia.away, "Away tracking CSV")->required();
  ingest->add_option("--events", ia.events, "Event CSV")->required();
  ingest->add_option("--grid", ia.grid, "coarse or fine")->capture_default_str();
  ingest->add_option("--seed", ia.seed, "Split seed")->capture_default_str();
  ingest->add_option("--out", ia.out, "Output dataset")->required();

  SynthArgs sa;
  auto* synth = app.add_subcommand("synth", "Generate the synthetic nearest-teammate dataset");
  synth->add_option("--n", sa.n, "Number of samples")->required();
  synth->add_option("--seed", sa.seed)->capture_default_str();
  synth->add_option("--grid", sa.grid, "coarse or fine")->capture_default_str();
  synth->add_option("--split", sa.split, "train,val,test counts (default 70/10/20)")->delimiter(',');
  synth->add_option("--out", sa.out, "Output dataset")->required();

  TrainArgs ta;
  auto* train = app.add_subcommand("train", "Train a model and write the best-validation checkpoint");
  train->add_option("--dataset", ta.dataset)->required();
  train->add_option("--d-model", ta.d_model)->capture_default_str();
  train->add_option("--heads", ta.heads)->capture_default_str();
  train->add_option("--stacks", ta.stacks)->capture_default_str();
  train->add_option("--blocks", ta.blocks)->capture_default_str();
  train->add_option("--mode", ta.mode, "canonical or probsparse")->capture_default_str();
  train->add_option("--factor", ta.factor, "Sampling factor c")->capture_default_str();
  train->add_option("--lr", ta.lr)->capture_default_str();
  train->add_option("--batch", ta.batch)->capture_default_str();
  train->add_option("--epochs", ta.epochs)->capture_default_str();
  train->add_option("--patience", ta.patience)->capture_default_str();
  train->add_option("--seed", ta.seed)->capture_default_str();
  train->add_option("--out", ta.out, "Output checkpoint")->required();

  EvalArgs ea;
  auto* eval = app.add_subcommand("eval", "Report CEL and top-k accuracy on a split");
  eval->add_option("--model", ea.model)->required();
  eval->add_option("--dataset", ea.dataset)->required();
  eval->add_option("--split", ea.split, "val or test")->capture_default_str();

  HeatmapArgs ha;
  auto* heat = app.add_subcommand("heatmap", "Write the predicted end-zone heatmap of one event");
  heat->add_option("--model", ha.model)->required();
  heat->add_option("--dataset", ha.dataset)->required();
  heat->add_option("--event", ha.event)->required();
  heat->add_option("--out", ha.out, "CSV, one row per x zone")->required();

  CounterfactualArgs ca;
  auto* cf = app.add_subcommand("counterfactual", "Heatmap change when one entity is moved");
  cf->add_option("--model", ca.model)->required();
  cf->add_option("--dataset", ca.dataset)->required();
  cf->add_option("--event", ca.event)->required();
  cf->add_option("--entity", ca.entity, "0-10 possession team, 11-21 opponents")->required();
  cf->add_option("--dx", ca.dx, "meters")->capture_default_str();
  cf->add_option("--dy", ca.dy, "meters")->capture_default_str();
  cf->add_option("--out", ca.out)->required();

  BenchArgs ba;
  auto* bench = app.add_subcommand("bench-attention", "Dot-product counts and timings, canonical vs ProbSparse");
  bench->add_option("--lengths", ba.lengths)->delimiter(',')->capture_default_str();
  bench->add_option("--factor", ba.factor)->capture_default_str();
  bench->add_option("--seed", ba.seed)->capture_default_str();
  bench->add_option("--dim", ba.dim, "Query/key width")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (*ingest) return run_ingest(ia);
    if (*synth) return run_synth(sa);
    if (*train) return run_train(ta);
    if (*eval) return run_eval(ea);
    if (*heat) return run_heatmap(ha);
    if (*cf) return run_counterfactual(ca);
    if (*bench) return run_bench(ba);
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kExitData;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << '\n';
    return 1;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  }
  return kExitUsage;
}
