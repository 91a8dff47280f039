// tour: build, validate, project, benchmark and serve tours.
//
// Exit codes: 0 success, 1 validation failure (bad input data or tour
// file), 2 usage error, 3 environment error (ports, files, display).

#include <csignal>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <memory>
#include <string>
#include <thread>
#include <vector>

#include <pthread.h>

#include "CLI11.hpp"
#include "dtour/dtour.hpp"

namespace fs = std::filesystem;
using namespace dtour;

namespace {

enum Exit { kOk = 0, kInvalid = 1, kUsage = 2, kEnvironment = 3 };

int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::BindFailure:
    case ErrorCode::IoError:
      return kEnvironment;
    case ErrorCode::InvalidArgument:
    case ErrorCode::MissingColumn:
    case ErrorCode::DimensionMismatch:
      return kUsage;
    default:
      return kInvalid;
  }
}

void print_warnings(const Diagnostics& diag) {
  for (const auto& w : diag.warnings) std::cerr << "warning: " << w << "\n";
}

struct DataArgs {
  std::string input;
  std::vector<std::string> label_columns;
  std::vector<std::string> embed_columns;
  char delimiter = ',';

  void add(CLI::App* app, bool required) {
    auto* opt = app->add_option("--input,-i", input, "Data file (.csv or .dtc1)");
    if (required) opt->required();
    app->add_option("--label-columns", label_columns, "CSV columns kept as labels instead of dimensions")->delimiter(',');
    app->add_option("--embed-columns", embed_columns, "CSV columns to embed (default: all non-label columns)")
        ->delimiter(',');
    app->add_option("--delimiter", delimiter, "CSV field delimiter");
  }

  Dataset load(Diagnostics& diag) const {
    CsvOptions o;
    o.delimiter = delimiter;
    o.label_columns = label_columns;
    o.embed_columns = embed_columns;
    return load_dataset(input, o, &diag);
  }
};

void print_path_summary(const TourPath& path) {
  std::printf("keyframes: %zu\n", path.sequence().size());
  std::printf("total length: %.9g\n", path.total_length());
  std::printf("segment lengths:");
  for (double s : path.segment_lengths()) std::printf(" %.9g", s);
  std::printf("\n");
}

// ---------------------------------------------------------------------------
// build

struct BuildArgs {
  DataArgs data;
  std::string strategy;
  std::size_t components = 0;
  std::size_t knn = 10;
  std::size_t frames = 0;
  std::uint64_t seed = 0;
  std::string standardize = "none";
  std::string output;
  std::string data_output;
  std::string embeddings;
  std::string producer;
};

std::vector<Embedding> load_embeddings(const fs::path& dir, std::vector<std::string>& labels) {
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".csv") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<Embedding> out;
  for (const auto& f : files) {
    Diagnostics diag;
    const Dataset ds = load_csv(f, {}, &diag);
    if (!diag.warnings.empty()) {
      throw Error(ErrorCode::ParseError, f.string() + ": embeddings must not contain non-finite rows");
    }
    if (ds.n_dims() != 2) {
      throw Error(ErrorCode::SchemaError, f.string() + " has " + std::to_string(ds.n_dims()) + " columns, expected 2");
    }
    Embedding e(ds.n_rows());
    for (std::size_t i = 0; i < e.size(); ++i) e[i] = {ds.columns[0][i], ds.columns[1][i]};
    out.push_back(std::move(e));
    labels.push_back(f.stem().string());
  }
  return out;
}

/// Runs the producer hook once per frame. Placeholders: {index} (0-based),
/// {out} (file to write), {prev} (previous file, empty for the first) and
/// {input} (the data file).
void run_producer(const BuildArgs& a, const fs::path& dir) {
  fs::create_directories(dir);
  std::string prev;
  for (std::size_t i = 0; i < a.frames; ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "frame_%04zu.csv", i);
    const std::string out = (dir / name).string();
    std::string cmd = a.producer;
    auto sub = [&](const std::string& key, const std::string& value) {
      for (auto pos = cmd.find(key); pos != std::string::npos; pos = cmd.find(key, pos + value.size())) {
        cmd.replace(pos, key.size(), value);
      }
    };
    sub("{index}", std::to_string(i));
    sub("{out}", out);
    sub("{prev}", prev);
    sub("{input}", a.data.input);
    if (std::system(cmd.c_str()) != 0) throw Error(ErrorCode::IoError, "producer failed for frame " + std::to_string(i));
    prev = out;
  }
}

int cmd_build(const BuildArgs& a) {
  Diagnostics diag;
  const StandardizeMode mode = parse_standardize_mode(a.standardize);
  TourFile tf;
  const fs::path out_path(a.output);
  const fs::path derived =
      a.data_output.empty() ? fs::path(out_path).replace_extension(".data.dtc1") : fs::path(a.data_output);

  if (a.strategy == "sequential") {
    if (a.embeddings.empty()) throw Error(ErrorCode::InvalidArgument, "--embeddings <dir> is required");
    if (!a.producer.empty()) {
      if (a.frames < 2) throw Error(ErrorCode::InvalidArgument, "--producer needs --frames >= 2");
      run_producer(a, a.embeddings);
    }
    std::vector<std::string> labels;
    const auto embeddings = load_embeddings(a.embeddings, labels);
    SequentialTour st = sequential_tour(embeddings, labels);
    for (std::size_t i = 0; i < st.residual_before.size(); ++i) {
      std::printf("alignment %zu->%zu: residual %.6g -> %.6g\n", i, i + 1, st.residual_before[i], st.residual_after[i]);
    }
    save_columnar(st.stacked, derived);
    tf = TourFile::from_sequence(st.sequence, st.stacked.dim_names, "sequential");
    tf.data = fs::relative(fs::absolute(derived), fs::absolute(out_path).parent_path()).string();
  } else {
    if (a.data.input.empty()) throw Error(ErrorCode::InvalidArgument, "--input is required");
    const Dataset raw = a.data.load(diag);
    const Standardized sd = standardize(raw, mode, &diag);
    const Dataset& ds = sd.data;
    const std::size_t p = ds.n_dims();
    if (p < 2) throw Error(ErrorCode::InvalidArgument, "a tour needs at least 2 embedded dimensions");
    if (a.strategy == "little") {
      const std::size_t k = a.components != 0 ? a.components : std::min<std::size_t>(p, 8);
      const PcaModel pca = fit_pca(ds, k);
      tf = TourFile::from_sequence(little_tour(pca, k, &diag), ds.dim_names, "little");
      tf.standardize = mode;
    } else if (a.strategy == "grand") {
      const std::size_t targets = a.frames != 0 ? a.frames : 8;
      tf = TourFile::from_sequence(grand_tour_extend(Basis::canonical(p, 0, 1), targets, a.seed), ds.dim_names,
                                   "grand");
      tf.standardize = mode;
    } else if (a.strategy == "le") {
      const std::size_t frames = a.frames != 0 ? a.frames : 4;
      const SpectralModel model = fit_spectral(ds, a.knn, frames + 1, &diag, {.seed = a.seed});
      const Dataset emb = model.embedding();
      save_columnar(emb, derived);
      tf = TourFile::from_sequence(le_tour(model, frames), emb.dim_names, "le");
      tf.data = fs::relative(fs::absolute(derived), fs::absolute(out_path).parent_path()).string();
    } else {
      throw Error(ErrorCode::InvalidArgument, "unknown strategy '" + a.strategy + "'");
    }
  }
  print_warnings(diag);
  const TourPath path(tf.sequence());
  save_tour(tf, out_path);
  print_path_summary(path);
  if (!tf.data.empty()) std::printf("data: %s\n", tf.data.c_str());
  std::printf("wrote %s\n", a.output.c_str());
  return kOk;
}

// ---------------------------------------------------------------------------
// validate

int cmd_validate(const std::string& file) {
  TourLoadReport report;
  TourFile tf;
  try {
    tf = inspect_tour_text(detail::read_file(file), report);
  } catch (const Error& e) {
    if (e.code() == ErrorCode::IoError) throw;
    std::printf("%s: %s\n", file.c_str(), e.what());
    return kInvalid;
  }
  for (const auto& k : report.keyframes) {
    std::printf("keyframe %zu: drift %.3e%s\n", k.index, k.drift,
                k.rejected ? " VIOLATION" : k.repaired ? " (re-orthonormalized on load)" : "");
  }
  if (!report.clean()) {
    std::printf("%s: orthonormality violations found\n", file.c_str());
    return kInvalid;
  }
  try {
    const TourPath path(tf.sequence());
    print_path_summary(path);
  } catch (const Error& e) {
    std::printf("%s: %s\n", file.c_str(), e.what());
    return kInvalid;
  }
  std::printf("%s: ok\n", file.c_str());
  return kOk;
}

// ---------------------------------------------------------------------------
// Shared loading for project / serve

struct Loaded {
  std::shared_ptr<const Dataset> data;
  std::shared_ptr<const TourPath> path;
};

/// The tour and the data it projects: --input when given, otherwise the
/// tour file's own data reference. The tour's standardization is applied
/// to raw input.
Loaded load_tour_and_data(const DataArgs& data, const std::string& tour_file) {
  Diagnostics diag;
  const TourFile tf = load_tour(tour_file);
  Dataset ds;
  if (!data.input.empty()) {
    ds = data.load(diag);
  } else if (!tf.data.empty()) {
    DataArgs ref = data;
    ref.input = (fs::path(tour_file).parent_path() / tf.data).string();
    ds = ref.load(diag);
  } else {
    throw Error(ErrorCode::InvalidArgument, "--input is required (the tour file names no data)");
  }
  ds = standardize(ds, tf.standardize, &diag).data;
  print_warnings(diag);
  if (ds.n_dims() != tf.dims) {
    throw Error(ErrorCode::DimensionMismatch, "tour has " + std::to_string(tf.dims) + " dimensions, data has " +
                                                  std::to_string(ds.n_dims()));
  }
  return {std::make_shared<const Dataset>(std::move(ds)), std::make_shared<const TourPath>(tf.sequence())};
}

// ---------------------------------------------------------------------------
// project

int cmd_project(const DataArgs& data, const std::string& tour, double t, const std::string& output,
                std::string format) {
  const Loaded l = load_tour_and_data(data, tour);
  if (format.empty()) format = fs::path(output).extension() == ".dtc1" ? "dtc1" : "csv";
  const SnapshotFormat fmt = parse_snapshot_format(format);
  const double wrapped = l.path->wrap(t);
  const Basis b = l.path->basis_at(wrapped);
  const Projection proj = project(*l.data, b, {.gain = blend_gain(b, l.path->blend())});
  write_snapshot(*l.data, proj, Selection(l.data->n_rows()), output, fmt);
  std::printf("t = %.9g (requested %.9g), %zu points -> %s\n", wrapped, t, l.data->n_rows(), output.c_str());
  return kOk;
}

// ---------------------------------------------------------------------------
// bench

int cmd_bench(BenchOptions opt, const std::string& points_file, const std::string& output) {
  Dataset file_data;
  const Dataset* data = nullptr;
  if (!points_file.empty()) {
    Diagnostics diag;
    file_data = load_dataset(points_file, {}, &diag);
    print_warnings(diag);
    data = &file_data;
  } else if (opt.n == 0) {
    throw Error(ErrorCode::EmptyDataset, "--n must be positive");
  }
  const BenchReport rep = run_bench(opt, data);
  const std::string json = rep.to_json().dump(2);
  std::printf("%s\n", json.c_str());
  if (!output.empty()) {
    std::ofstream out(output);
    if (!out) throw Error(ErrorCode::IoError, "cannot write '" + output + "'");
    out << json << "\n";
  }
  return kOk;
}

// ---------------------------------------------------------------------------
// serve

int cmd_serve(const DataArgs& data, const std::string& tour, ServerOptions opt, bool open_browser) {
  const Loaded l = load_tour_and_data(data, tour);
  // Block termination signals in every thread; the main thread waits for them.
  sigset_t signals;
  sigemptyset(&signals);
  sigaddset(&signals, SIGINT);
  sigaddset(&signals, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &signals, nullptr);

  Server server(l.data, l.path, opt);
  const std::string url = "http://" + opt.address + ":" + std::to_string(server.port()) + "/";
  std::printf("serving %zu points, %zu keyframes at %s (websocket %s)\n", l.data->n_rows(),
              l.path->sequence().size(), url.c_str(), opt.websocket_path.c_str());
  std::fflush(stdout);
  if (open_browser) {
    if (std::getenv("DISPLAY") == nullptr && std::getenv("WAYLAND_DISPLAY") == nullptr) {
      std::cerr << "warning: --open ignored, no display available; continuing headless\n";
    } else {
      const std::string cmd = "xdg-open '" + url + "' >/dev/null 2>&1 &";
      if (std::system(cmd.c_str()) != 0) std::cerr << "warning: could not launch a browser\n";
    }
  }
  std::thread worker([&] { server.run(); });
  int sig = 0;
  sigwait(&signals, &sig);
  server.stop();
  worker.join();
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"tour: guided, grand and manual tours of high-dimensional data"};
  app.require_subcommand(1);
  app.set_config("--config", "dtour.toml", "Read options from a TOML file");

  BuildArgs build;
  auto* b = app.add_subcommand("build", "Build a tour file from data");
  build.data.add(b, false);
  b->add_option("--strategy,-s", build.strategy, "little | le | grand | sequential")
      ->required()
      ->check(CLI::IsMember({"little", "le", "grand", "sequential"}));
  b->add_option("--components,-k", build.components, "Principal components in a little tour (default min(p, 8))");
  b->add_option("--knn", build.knn, "Neighbors per point for the le strategy")->capture_default_str();
  b->add_option("--frames,-n", build.frames,
                "Keyframes (le, default 4), random targets (grand, default 8), or producer runs (sequential)");
  b->add_option("--seed", build.seed, "Random seed")->capture_default_str();
  b->add_option("--standardize", build.standardize, "none | zscore | unit_range")
      ->check(CLI::IsMember({"none", "zscore", "unit_range"}))
      ->capture_default_str();
  b->add_option("--output,-o", build.output, "Tour file to write")->required();
  b->add_option("--data-output", build.data_output, "Derived dataset for le / sequential (default <output>.data.dtc1)");
  b->add_option("--embeddings", build.embeddings, "Directory of ordered 2-column embedding CSVs (sequential)");
  b->add_option("--producer", build.producer,
                "Command run --frames times to produce embeddings: {index} {out} {prev} {input} are substituted; "
                "each run should warm-start from {prev}");

  std::string validate_file;
  auto* v = app.add_subcommand("validate", "Check a tour file's keyframes");
  v->add_option("tour", validate_file, "Tour file")->required();

  DataArgs project_data;
  std::string project_tour, project_output, project_format;
  double project_t = 0.0;
  auto* p = app.add_subcommand("project", "Write the projection at one tour position");
  project_data.add(p, false);
  p->add_option("--tour", project_tour, "Tour file")->required();
  p->add_option("--t", project_t, "Tour position; cyclic tours wrap values outside [0, 1), open tours clamp")
      ->capture_default_str();
  p->add_option("--output,-o", project_output, "Snapshot file")->required();
  p->add_option("--format", project_format, "csv | dtc1 (default: from the output extension)")
      ->check(CLI::IsMember({"csv", "dtc1"}));

  BenchOptions bench;
  std::string bench_points, bench_output;
  auto* be = app.add_subcommand("bench", "Measure projection throughput and basis_at latency");
  be->add_option("--n", bench.n, "Points")->capture_default_str();
  be->add_option("--p", bench.p, "Dimensions")->capture_default_str();
  be->add_option("--seconds", bench.seconds, "Projection measurement window")->capture_default_str();
  be->add_option("--threads", bench.projection.threads, "Worker threads (0: all cores)")->capture_default_str();
  be->add_option("--seed", bench.seed, "Random seed")->capture_default_str();
  be->add_option("--points-file", bench_points, "Benchmark on this dataset instead of random data");
  be->add_option("--output,-o", bench_output, "Also write the JSON report here");

  DataArgs serve_data;
  std::string serve_tour;
  ServerOptions serve;
  bool serve_open = false;
  auto* s = app.add_subcommand("serve", "Serve a tour session to the browser UI");
  serve_data.add(s, false);
  s->add_option("--tour", serve_tour, "Tour file")->required();
  s->add_option("--port", serve.port, "TCP port")->envname("DTOUR_PORT")->capture_default_str();
  s->add_option("--address", serve.address, "Bind address")->capture_default_str();
  s->add_option("--ui-dir", serve.ui_dir, "Directory of the built UI bundle");
  s->add_option("--frame-budget", serve.controller.frame_budget_hz, "Maximum basis updates per second")
      ->capture_default_str();
  s->add_option("--seed", serve.session.seed, "Grand-tour seed")->capture_default_str();
  s->add_flag("--open", serve_open, "Open a browser window");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsage;
  }

  try {
    if (b->parsed()) return cmd_build(build);
    if (v->parsed()) return cmd_validate(validate_file);
    if (p->parsed()) return cmd_project(project_data, project_tour, project_t, project_output, project_format);
    if (be->parsed()) return cmd_bench(bench, bench_points, bench_output);
    if (s->parsed()) return cmd_serve(serve_data, serve_tour, serve, serve_open);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code_for(e.code());
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kEnvironment;
  }
  return kUsage;
}
