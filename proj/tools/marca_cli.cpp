// marca: train, complete, transfer, synth and eval from the command line.

#include <CLI11.hpp>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "marca/errors.hpp"
#include "marca/io.hpp"
#include "marca/reconstructor.hpp"
#include "marca/synthbench.hpp"
#include "marca/trainer.hpp"

namespace fs = std::filesystem;
using namespace marca;

namespace {

struct SolverFlags {
  std::optional<double> lambda;
  std::optional<double> eps;
  std::optional<int> t_max;
  std::optional<double> rho;
  std::optional<double> mu_max;
  std::optional<double> mu0_scale;
  std::string mu0_norm = "l1";
  std::uint64_t seed = 0;

  void add_to(CLI::App& app) {
    app.add_option("--lambda", lambda, "sparsity weight")
        ->check(CLI::PositiveNumber);
    app.add_option("--eps", eps, "convergence threshold")
        ->check(CLI::PositiveNumber);
    app.add_option("--t-max", t_max, "iteration cap")
        ->check(CLI::PositiveNumber);
    app.add_option("--rho", rho, "penalty growth factor (> 1)");
    app.add_option("--mu-max", mu_max, "penalty cap")
        ->check(CLI::PositiveNumber);
    app.add_option("--mu0-scale", mu0_scale, "numerator of the initial penalty")
        ->check(CLI::PositiveNumber);
    app.add_option("--mu0-norm", mu0_norm, "norm in the initial penalty")
        ->check(CLI::IsMember({"spectral", "frobenius", "l1"}))
        ->capture_default_str();
    app.add_option("--seed", seed, "random seed")->capture_default_str();
  }
};

struct ReconFlags : SolverFlags {
  std::optional<Index> rank;
  std::optional<double> energy;
  bool skip_individual = false;

  void add_to(CLI::App& app) {
    SolverFlags::add_to(app);
    auto* r = app.add_option("--rank", rank, "explicit rank of the individual span")
                  ->check(CLI::NonNegativeNumber);
    auto* e = app.add_option("--energy", energy,
                             "energy fraction for the individual span (default 0.99)")
                  ->check(CLI::Range(0.0, 1.0));
    auto* s = app.add_flag("--skip-individual", skip_individual,
                           "no individual span (rank 0)");
    r->excludes(e)->excludes(s);
    e->excludes(s);
  }

  ReconConfig config() const {
    ReconConfig c;
    c.lambda = lambda;
    if (eps) c.eps = *eps;
    if (t_max) c.t_max = *t_max;
    if (rho) c.rho = *rho;
    if (mu_max) c.mu_max = *mu_max;
    if (mu0_scale) c.mu0_scale = *mu0_scale;
    c.mu0_norm = parse_mu0_norm(mu0_norm);
    if (skip_individual) c.rank_rule = proxops::RankRule::explicit_rank(0);
    else if (rank) c.rank_rule = proxops::RankRule::explicit_rank(*rank);
    else if (energy) c.rank_rule = proxops::RankRule::energy(*energy);
    return c;
  }
};

unsigned thread_count() {
  if (const char* env = std::getenv("MARCA_THREADS")) {
    try {
      const long n = std::stol(env);
      if (n >= 1) return static_cast<unsigned>(n);
    } catch (const std::exception&) {
    }
    throw InvalidArgument(std::string("MARCA_THREADS must be a positive integer, got '") +
                          env + "'");
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

bool is_matrix_file(const fs::path& p) {
  const auto ext = p.extension();
  return fs::is_regular_file(p) && (ext == ".marc" || ext == ".csv");
}

struct Job {
  fs::path input;
  std::optional<fs::path> mask;
  fs::path output;
};

// One job for a file input, one per matrix file (sorted by name) for a
// directory input. Masks and outputs are matched by file name.
std::vector<Job> plan_jobs(const fs::path& input,
                           const std::optional<fs::path>& mask,
                           const fs::path& output) {
  if (!fs::exists(input))
    throw IoError("input '" + input.string() + "' not found");
  if (!fs::is_directory(input)) {
    if (mask && fs::is_directory(*mask))
      throw InvalidArgument("--mask is a directory but --input is a file");
    return {Job{input, mask, output}};
  }
  if (mask && !fs::is_directory(*mask))
    throw InvalidArgument("--input is a directory, so --mask must be one too");

  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(input))
    if (is_matrix_file(entry.path())) files.push_back(entry.path());
  std::sort(files.begin(), files.end());
  if (files.empty())
    throw InvalidArgument("no .marc or .csv files in '" + input.string() + "'");

  std::error_code ec;
  fs::create_directories(output, ec);
  if (ec) throw IoError("cannot create '" + output.string() + "': " + ec.message());

  std::vector<Job> jobs;
  for (const auto& f : files) {
    Job job{f, std::nullopt, output / f.filename()};
    if (mask) {
      const fs::path m = *mask / f.filename();
      if (!fs::exists(m))
        throw IoError("no mask '" + m.string() + "' for input '" + f.string() + "'");
      job.mask = m;
    }
    jobs.push_back(std::move(job));
  }
  return jobs;
}

using Solve = std::function<ReconResult(const Vector& y, const Vector& w)>;

int run_jobs(const std::vector<Job>& jobs, const Solve& solve) {
  std::vector<ReconResult> results(jobs.size());
  std::vector<std::exception_ptr> errors(jobs.size());
  std::atomic<std::size_t> next{0};

  auto worker = [&] {
    for (std::size_t k = next++; k < jobs.size(); k = next++) {
      try {
        const Vector y = io::read_vector(jobs[k].input);
        const Vector w = jobs[k].mask ? Vector(io::read_mask(*jobs[k].mask).reshaped())
                                      : Vector::Ones(y.size());
        if (w.size() != y.size())
          throw InvalidArgument(jobs[k].input.string() + ": mask length " +
                                std::to_string(w.size()) + " does not match " +
                                std::to_string(y.size()));
        results[k] = solve(y, w);
        io::write_vector(jobs[k].output, results[k].y_hat);
      } catch (...) {
        errors[k] = std::current_exception();
      }
    }
  };

  const unsigned n = std::min<std::size_t>(thread_count(), jobs.size());
  std::vector<std::thread> pool;
  for (unsigned i = 1; i < n; ++i) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();

  // Report in input order so output is deterministic.
  for (std::size_t k = 0; k < jobs.size(); ++k) {
    if (errors[k]) std::rethrow_exception(errors[k]);
    const auto& d = results[k].diagnostics;
    std::printf("%s: iterations=%d residual=%.3e converged=%s\n",
                jobs[k].output.string().c_str(), d.iterations, d.residual,
                d.converged ? "true" : "false");
    if (!d.converged)
      std::fprintf(stderr, "warning: %s did not converge within t_max\n",
                   jobs[k].input.string().c_str());
  }
  return 0;
}

std::map<std::string, std::string> parse_targets(const std::vector<std::string>& raw) {
  std::map<std::string, std::string> out;
  for (const auto& t : raw) {
    const auto eq = t.find('=');
    if (eq == std::string::npos || eq == 0 || eq + 1 == t.size())
      throw InvalidArgument("--target expects attr=instantiation, got '" + t + "'");
    const auto [it, fresh] = out.emplace(t.substr(0, eq), t.substr(eq + 1));
    if (!fresh)
      throw InvalidArgument("attribute '" + it->first + "' targeted twice");
  }
  return out;
}

std::vector<Index> parse_counts(const std::string& s) {
  std::vector<Index> out;
  if (s.empty()) return out;
  std::size_t pos = 0;
  while (pos <= s.size()) {
    const auto comma = s.find(',', pos);
    const std::string tok = s.substr(pos, comma == std::string::npos ? std::string::npos : comma - pos);
    try {
      std::size_t used = 0;
      const long v = std::stol(tok, &used);
      if (used != tok.size() || v < 1) throw std::invalid_argument(tok);
      out.push_back(v);
    } catch (const std::exception&) {
      throw InvalidArgument("--counts expects positive integers, got '" + s + "'");
    }
    if (comma == std::string::npos) break;
    pos = comma + 1;
  }
  return out;
}

std::string sample_name(const char* prefix, std::size_t k) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%s_%04zu.marc", prefix, k);
  return buf;
}

int cmd_train(const fs::path& manifest, const fs::path& out, const SolverFlags& f,
              const std::string& convergence) {
  const TrainingSet ts = io::load_training_set(manifest);
  SolverConfig c;
  c.lambda = f.lambda;
  if (f.eps) c.eps = *f.eps;
  if (f.t_max) c.t_max = *f.t_max;
  if (f.rho) c.rho = *f.rho;
  if (f.mu_max) c.mu_max = *f.mu_max;
  if (f.mu0_scale) c.mu0_scale = *f.mu0_scale;
  c.mu0_norm = parse_mu0_norm(f.mu0_norm);
  c.seed = f.seed;
  c.convergence = convergence == "masked" ? ResidualForm::Masked : ResidualForm::Constraint;

  const auto start = std::chrono::steady_clock::now();
  const ModelBundle bundle = train(ts, c);
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  io::save_bundle(out, bundle);

  const auto& d = bundle.diagnostics;
  std::printf("iterations=%d residual=%.3e masked_residual=%.3e converged=%s wall_time_s=%.3f\n",
              d.iterations, d.constraint_residual, d.masked_residual,
              d.converged ? "true" : "false", secs);
  if (!d.converged)
    std::fprintf(stderr, "warning: training did not converge within t_max=%d\n", c.t_max);
  return 0;
}

std::vector<std::string> parse_names(const std::string& s) {
  std::vector<std::string> out;
  std::size_t pos = 0;
  while (!s.empty()) {
    const auto comma = s.find(',', pos);
    out.push_back(s.substr(pos, comma == std::string::npos ? std::string::npos : comma - pos));
    if (comma == std::string::npos) break;
    pos = comma + 1;
  }
  return out;
}

int cmd_synth(const fs::path& out, const std::string& counts, const std::string& names,
              const synth::SynthSpec& base, int holdouts, double holdout_missing) {
  synth::SynthSpec spec = base;
  spec.schema = synth::SynthSpec::make_schema(parse_counts(counts), parse_names(names));
  spec.validate();
  if (holdouts < 0) throw InvalidArgument("--holdouts must be >= 0");
  const synth::Instance inst = synth::generate(spec);
  for (const char* sub : {"samples", "holdout/y", "holdout/mask", "holdout/clean"}) {
    if (holdouts == 0 && sub[0] == 'h') continue;
    std::error_code ec;
    fs::create_directories(out / sub, ec);
    if (ec) throw IoError("cannot create '" + (out / sub).string() + "': " + ec.message());
  }

  io::Manifest m;
  m.schema = spec.schema;
  const auto samples = split(inst.training);
  for (std::size_t n = 0; n < samples.size(); ++n) {
    const fs::path data = fs::path("samples") / sample_name("x", n);
    const fs::path mask = fs::path("samples") / sample_name("w", n);
    io::write_matrix(out / data, samples[n].x);
    io::write_matrix(out / mask, samples[n].w);
    m.samples.push_back({data, mask, samples[n].labels});
  }
  io::write_manifest(out / "manifest.json", m);
  io::save_truth(out / "truth", inst.truth);

  for (int k = 0; k < holdouts; ++k) {
    const auto h = synth::draw_holdout(inst.truth, spec, holdout_missing,
                                       spec.seed * 1000003ULL + 1 + k);
    const std::string name = sample_name("h", k);
    io::write_vector(out / "holdout" / "y" / name, h.y);
    io::write_vector(out / "holdout" / "mask" / name, h.w);
    io::write_vector(out / "holdout" / "clean" / name, h.clean);
  }
  std::printf("wrote %zu samples (%lld x %lld) and %d holdouts to %s\n", samples.size(),
              static_cast<long long>(spec.features), static_cast<long long>(spec.samples),
              holdouts, out.string().c_str());
  return 0;
}

int cmd_eval(const fs::path& bundle_dir, const fs::path& truth_dir,
             const std::optional<fs::path>& json_out) {
  const ModelBundle bundle = io::load_bundle(bundle_dir);
  const synth::GroundTruth truth = io::load_truth(truth_dir);
  const auto report = synth::recovery_metrics(bundle, truth);
  std::cout << synth::to_key_value(report);
  const std::string json = io::metrics_json(report);
  if (json_out) io::write_file(*json_out, json + "\n");
  else std::cout << json << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"marca: multi-attribute robust component analysis"};
  app.require_subcommand(1);

  // train
  auto* train_cmd = app.add_subcommand("train", "fit a model bundle to a manifest");
  fs::path manifest, bundle_out;
  SolverFlags train_flags;
  std::string convergence = "constraint";
  train_cmd->add_option("manifest", manifest, "manifest JSON")->required();
  train_cmd->add_option("out", bundle_out, "bundle directory to write")->required();
  train_flags.add_to(*train_cmd);
  train_cmd->add_option("--convergence", convergence, "residual compared against eps")
      ->check(CLI::IsMember({"constraint", "masked"}))
      ->capture_default_str();

  // complete / transfer share their inputs
  fs::path bundle_dir, input, out;
  std::optional<fs::path> mask;
  ReconFlags recon_flags;
  auto add_recon_io = [&](CLI::App* cmd) {
    cmd->add_option("--bundle", bundle_dir, "trained bundle directory")->required();
    cmd->add_option("--input", input, "vector file or directory of vectors")->required();
    cmd->add_option("--mask", mask, "mask file or directory (default: all visible)");
    cmd->add_option("--out", out, "output file or directory")->required();
    recon_flags.add_to(*cmd);
  };
  auto* complete_cmd = app.add_subcommand("complete", "fill in missing entries");
  add_recon_io(complete_cmd);

  auto* transfer_cmd = app.add_subcommand("transfer", "re-render with pinned attributes");
  add_recon_io(transfer_cmd);
  std::vector<std::string> targets;
  bool post_hoc = false;
  transfer_cmd->add_option("--target", targets, "attr=instantiation (repeatable)")
      ->required();
  transfer_cmd->add_flag("--post-hoc", post_hoc,
                         "solve with all selectors free, then swap targets in");

  // synth
  auto* synth_cmd = app.add_subcommand("synth", "generate a synthetic dataset with ground truth");
  fs::path synth_out;
  synth::SynthSpec spec = synth::SynthSpec::defaults();
  std::string counts = "3,4";
  std::string names = "identity,age";
  int holdouts = 0;
  double holdout_missing = 0.3;
  synth_cmd->add_option("out", synth_out, "output directory")->required();
  synth_cmd->add_option("--counts", counts, "instantiations per attribute, comma separated")
      ->capture_default_str();
  synth_cmd->add_option("--names", names,
                        "attribute names, comma separated (extra attributes get attr<i>)")
      ->capture_default_str();
  synth_cmd->add_option("--features", spec.features)->capture_default_str();
  synth_cmd->add_option("--samples", spec.samples)->capture_default_str();
  synth_cmd->add_option("--rank-g", spec.rank_g)->capture_default_str();
  synth_cmd->add_option("--sparsity", spec.sparsity)->capture_default_str();
  synth_cmd->add_option("--missing", spec.missing_frac)->capture_default_str();
  synth_cmd->add_option("--noise-amp", spec.noise_amp)->capture_default_str();
  synth_cmd->add_option("--seed", spec.seed)->capture_default_str();
  synth_cmd->add_option("--holdouts", holdouts, "held-out samples to write")
      ->capture_default_str();
  synth_cmd->add_option("--holdout-missing", holdout_missing)->capture_default_str();

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "score a bundle against synthetic ground truth");
  fs::path truth_dir;
  std::optional<fs::path> json_out;
  eval_cmd->add_option("bundle", bundle_dir, "bundle directory")->required();
  eval_cmd->add_option("truth", truth_dir, "truth directory from synth")->required();
  eval_cmd->add_option("--json", json_out, "write the JSON report here instead of stdout");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : exit_code(ErrorKind::Validation);
  }

  try {
    if (*train_cmd) return cmd_train(manifest, bundle_out, train_flags, convergence);
    if (*synth_cmd) return cmd_synth(synth_out, counts, names, spec, holdouts, holdout_missing);
    if (*eval_cmd) return cmd_eval(bundle_dir, truth_dir, json_out);

    const ReconConfig config = recon_flags.config();
    config.validate();
    ModelBundle bundle = io::load_bundle(bundle_dir);
    build_span(bundle, config.rank_rule);
    const auto jobs = plan_jobs(input, mask, out);

    if (*complete_cmd)
      return run_jobs(jobs, [&](const Vector& y, const Vector& w) {
        return complete(y, w, bundle, config);
      });

    const auto pinned = parse_targets(targets);
    TransferSpec::from_targets(bundle.schema, pinned);  // validate before any work
    const TransferMode mode = post_hoc ? TransferMode::PostHoc : TransferMode::Joint;
    return run_jobs(jobs, [&](const Vector& y, const Vector& w) {
      return transfer(y, w, bundle, pinned, config, mode);
    });
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return exit_code(e.kind());
  } catch (const fs::filesystem_error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return exit_code(ErrorKind::Io);
  } catch (const std::bad_alloc&) {
    std::fprintf(stderr, "error: out of memory\n");
    return exit_code(ErrorKind::Numerical);
  }
}
