#include "cli.hpp"

#include <charconv>
#include <fstream>
#include <iostream>
#include <optional>
#include <set>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"

#include "moshead/dataio.hpp"
#include "moshead/error.hpp"
#include "moshead/influence.hpp"
#include "moshead/metrics.hpp"
#include "moshead/model.hpp"
#include "moshead/swag.hpp"
#include "moshead/synth.hpp"
#include "moshead/trainer.hpp"
#include "moshead/version.hpp"

namespace moshead::cli {

namespace fs = std::filesystem;

namespace {

// ---------------------------------------------------------------- helpers

std::string fmt(double v) { return dataio::format_double(v); }

std::vector<std::size_t> parse_hidden(const std::string& s) {
  std::vector<std::size_t> dims;
  std::string cur;
  std::stringstream ss(s);
  while (std::getline(ss, cur, ',')) {
    if (cur.empty()) continue;
    std::size_t v = 0;
    auto [ptr, ec] = std::from_chars(cur.data(), cur.data() + cur.size(), v);
    if (ec != std::errc{} || ptr != cur.data() + cur.size() || v == 0)
      throw Error::usage("bad --hidden entry '" + cur + "', want positive integers");
    dims.push_back(v);
  }
  return dims;
}

model::LossKind parse_loss_kind(const std::string& s) {
  if (s == "l1") return model::LossKind::l1;
  if (s == "mse") return model::LossKind::mse;
  if (s == "huber") return model::LossKind::huber;
  throw Error::usage("unknown loss '" + s + "'");
}

model::Activation parse_activation(const std::string& s) {
  if (s == "tanh") return model::Activation::tanh_fn;
  if (s == "relu") return model::Activation::relu;
  throw Error::usage("unknown activation '" + s + "'");
}

swag::SampleMode parse_mode(const std::string& s) {
  if (s == "mean-only") return swag::SampleMode::mean_only;
  if (s == "diag") return swag::SampleMode::diag;
  if (s == "diag-lowrank") return swag::SampleMode::diag_lowrank;
  throw Error::usage("unknown sample mode '" + s + "'");
}

std::vector<std::string> split_commas(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  std::stringstream ss(s);
  while (std::getline(ss, cur, ',')) {
    if (!cur.empty()) out.push_back(cur);
  }
  return out;
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error::data("cannot create output directory " + dir.string());
}

nlohmann::json metric_report_json(const metrics::MetricReport& r) {
  return {
      {"utterance",
       {{"mse", r.utterance.mse}, {"lcc", r.utterance.lcc}, {"srcc", r.utterance.srcc},
        {"ktau", r.utterance.ktau}}},
      {"system",
       {{"mse", r.system.mse}, {"lcc", r.system.lcc}, {"srcc", r.system.srcc},
        {"ktau", r.system.ktau}}},
      {"n_utterances", r.n_utterances},
      {"n_systems", r.n_systems},
  };
}

void check_artifacts_exist(const nlohmann::json& artifacts) {
  if (artifacts.is_string()) {
    const auto p = artifacts.get<std::string>();
    if (!fs::exists(p)) throw Error::internal("manifest references missing artifact " + p);
    return;
  }
  if (artifacts.is_object() || artifacts.is_array()) {
    for (const auto& v : artifacts) check_artifacts_exist(v);
  }
}

/// argv holds the exact subcommand invocation (every option resolved), so a
/// run can be reproduced from the manifest alone.
void write_manifest(const fs::path& out_dir, const std::string& subcommand,
                    std::uint64_t seed, const std::vector<std::string>& argv,
                    const nlohmann::json& config, nlohmann::json artifacts) {
  check_artifacts_exist(artifacts);
  nlohmann::json j = {
      {"tool", "moshead"},      {"version", kVersion}, {"subcommand", subcommand},
      {"seed", seed},           {"argv", argv},        {"config", config},
      {"artifacts", artifacts},
  };
  std::ofstream os(out_dir / "manifest.json", std::ios::binary);
  if (!os) throw Error::data("cannot write manifest in " + out_dir.string());
  os << j.dump(2) << '\n';
}

// ------------------------------------------------------------ subcommands

struct GenSynthOpts {
  std::string out;
  synth::SynthConfig cfg;
};

void run_gen_synth(const GenSynthOpts& o) {
  ensure_dir(o.out);
  const auto result = synth::generate(o.cfg);
  const fs::path out(o.out);
  dataio::save_dataset(result.train, out / "train.csv", out / "train.swgf");
  nlohmann::json artifacts = {
      {"train_table", (out / "train.csv").string()},
      {"train_features", (out / "train.swgf").string()},
  };
  if (!result.dev.records.empty()) {
    dataio::save_dataset(result.dev, out / "dev.csv", out / "dev.swgf");
    artifacts["dev_table"] = (out / "dev.csv").string();
    artifacts["dev_features"] = (out / "dev.swgf").string();
  }
  if (!result.test.records.empty()) {
    dataio::save_dataset(result.test, out / "test.csv", out / "test.swgf");
    artifacts["test_table"] = (out / "test.csv").string();
    artifacts["test_features"] = (out / "test.swgf").string();
  }
  {
    std::ofstream os(out / "corrupted_ids.txt", std::ios::binary);
    for (const auto& id : result.corrupted_ids) os << id << '\n';
  }
  artifacts["corrupted_ids"] = (out / "corrupted_ids.txt").string();

  std::vector<std::string> argv = {
      "gen-synth",
      "--out", o.out,
      "--systems", std::to_string(o.cfg.train_systems),
      "--utts", std::to_string(o.cfg.train_utts),
      "--dev-systems", std::to_string(o.cfg.dev_systems),
      "--dev-utts", std::to_string(o.cfg.dev_utts),
      "--test-systems", std::to_string(o.cfg.test_systems),
      "--test-utts", std::to_string(o.cfg.test_utts),
      "--feature-dim", std::to_string(o.cfg.feature_dim),
      "--noise", fmt(o.cfg.noise),
      "--jitter", fmt(o.cfg.jitter),
      "--corrupt", std::to_string(o.cfg.corrupt),
      "--seed", std::to_string(o.cfg.seed),
  };
  nlohmann::json config = {
      {"systems", o.cfg.train_systems},   {"utts", o.cfg.train_utts},
      {"dev_systems", o.cfg.dev_systems}, {"dev_utts", o.cfg.dev_utts},
      {"test_systems", o.cfg.test_systems}, {"test_utts", o.cfg.test_utts},
      {"feature_dim", o.cfg.feature_dim}, {"noise", o.cfg.noise},
      {"jitter", o.cfg.jitter},           {"corrupt", o.cfg.corrupt},
      {"seed", o.cfg.seed},
  };
  write_manifest(out, "gen-synth", o.cfg.seed, argv, config, artifacts);
}

struct ModelOpts {
  std::string hidden;
  std::string activation = "tanh";
  bool unbounded = false;
};

model::ModelSpec build_spec(const ModelOpts& m, std::size_t input_dim) {
  model::ModelSpec spec;
  spec.input_dim = input_dim;
  spec.hidden_dims = parse_hidden(m.hidden);
  spec.activation = parse_activation(m.activation);
  spec.output = m.unbounded ? model::OutputKind::linear : model::OutputKind::sigmoid_bounded;
  return spec;
}

struct SgdOpts {
  std::uint64_t iterations = 30000;
  double lr = 0.001;
  double lr_min = 0.0;
  double momentum = 0.9;
  std::string schedule = "cosine";
  std::uint64_t cosine_period = 100;
  std::size_t batch_size = 8;
  std::size_t accum_steps = 1;
  std::uint64_t seed = 0;
  std::string loss = "l1";
  double huber_delta = 1.0;
  std::uint64_t checkpoint_interval = 500;
};

trainer::TrainConfig build_train_config(const SgdOpts& o) {
  trainer::TrainConfig cfg;
  cfg.iterations = o.iterations;
  cfg.lr = o.lr;
  cfg.lr_min = o.lr_min;
  cfg.momentum = o.momentum;
  if (o.schedule == "cosine") {
    cfg.schedule = trainer::Schedule::cosine;
  } else if (o.schedule == "constant") {
    cfg.schedule = trainer::Schedule::constant;
  } else {
    throw Error::usage("unknown schedule '" + o.schedule + "'");
  }
  cfg.cosine_period = o.cosine_period;
  cfg.batch_size = o.batch_size;
  cfg.accumulation_steps = o.accum_steps;
  cfg.seed = o.seed;
  cfg.loss = {parse_loss_kind(o.loss), o.huber_delta};
  cfg.checkpoint_interval = o.checkpoint_interval;
  return cfg;
}

void append_sgd_argv(std::vector<std::string>& argv, const SgdOpts& o) {
  argv.insert(argv.end(), {
      "--iterations", std::to_string(o.iterations),
      "--lr", fmt(o.lr),
      "--lr-min", fmt(o.lr_min),
      "--momentum", fmt(o.momentum),
      "--schedule", o.schedule,
      "--cosine-period", std::to_string(o.cosine_period),
      "--batch-size", std::to_string(o.batch_size),
      "--accum-steps", std::to_string(o.accum_steps),
      "--seed", std::to_string(o.seed),
      "--loss", o.loss,
      "--huber-delta", fmt(o.huber_delta),
      "--checkpoint-interval", std::to_string(o.checkpoint_interval),
  });
}

nlohmann::json sgd_config_json(const SgdOpts& o) {
  return {
      {"iterations", o.iterations}, {"lr", o.lr},
      {"lr_min", o.lr_min},         {"momentum", o.momentum},
      {"schedule", o.schedule},     {"cosine_period", o.cosine_period},
      {"batch_size", o.batch_size}, {"accum_steps", o.accum_steps},
      {"seed", o.seed},             {"loss", o.loss},
      {"huber_delta", o.huber_delta}, {"checkpoint_interval", o.checkpoint_interval},
  };
}

struct TrainOpts {
  std::string train_table, train_features;
  std::string dev_table, dev_features;
  std::string out;
  bool standardize = false;
  ModelOpts model;
  SgdOpts sgd;
};

std::string checkpoint_name(std::uint64_t iteration) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "checkpoint_%08llu.ckpt",
                static_cast<unsigned long long>(iteration));
  return buf;
}

void run_train(const TrainOpts& o) {
  ensure_dir(o.out);
  if (o.dev_table.empty() != o.dev_features.empty())
    throw Error::usage("--dev-table and --dev-features must be given together");

  auto train_set = dataio::load_dataset(o.train_table, o.train_features, "train");
  std::optional<dataio::Dataset> dev_set;
  if (!o.dev_table.empty())
    dev_set = dataio::load_dataset(o.dev_table, o.dev_features, "dev");

  std::optional<dataio::FeatureNorm> norm;
  if (o.standardize) {
    norm = dataio::compute_norm(train_set);
    train_set = dataio::apply_norm(train_set, *norm);
    if (dev_set) dev_set = dataio::apply_norm(*dev_set, *norm);
  }

  const auto spec = build_spec(o.model, train_set.feature_dim);
  const auto cfg = build_train_config(o.sgd);
  const auto checkpoints =
      trainer::train(spec, train_set, dev_set ? &*dev_set : nullptr, cfg);

  const fs::path out(o.out);
  nlohmann::json ckpt_list = nlohmann::json::array();
  std::string final_path;
  for (const auto& ck : checkpoints) {
    const auto name = checkpoint_name(ck.iteration);
    const auto path = (out / name).string();
    model::save_checkpoint(path, {spec, ck.params, cfg.seed, ck.iteration, norm});
    nlohmann::json entry = {{"path", path}, {"iteration", ck.iteration}};
    entry["dev_metrics"] =
        ck.dev_metrics ? metric_report_json(*ck.dev_metrics) : nlohmann::json(nullptr);
    ckpt_list.push_back(entry);
    final_path = path;
  }
  const auto final_name = (out / "final_checkpoint.ckpt").string();
  model::save_checkpoint(final_name, {spec, checkpoints.back().params, cfg.seed,
                                      checkpoints.back().iteration, norm});

  std::vector<std::string> argv = {
      "train",
      "--train-table", o.train_table,
      "--train-features", o.train_features,
  };
  if (!o.dev_table.empty())
    argv.insert(argv.end(),
                {"--dev-table", o.dev_table, "--dev-features", o.dev_features});
  argv.insert(argv.end(), {"--out", o.out, "--hidden", o.model.hidden, "--activation",
                           o.model.activation});
  if (o.model.unbounded) argv.push_back("--unbounded");
  if (o.standardize) argv.push_back("--standardize");
  append_sgd_argv(argv, o.sgd);

  nlohmann::json config = sgd_config_json(o.sgd);
  config["hidden"] = o.model.hidden;
  config["activation"] = o.model.activation;
  config["unbounded"] = o.model.unbounded;
  config["standardize"] = o.standardize;

  write_manifest(out, "train", o.sgd.seed, argv, config,
                 {{"checkpoints", ckpt_list}, {"final_checkpoint", final_name}});
}

struct SwagOpts {
  std::string train_table, train_features;
  std::string dev_table, dev_features;
  std::string from_checkpoint;
  std::string out;
  bool standardize = false;
  ModelOpts model;
  SgdOpts sgd;
  std::uint64_t snapshot_every = 0;
  std::size_t rank_max = 20;
};

void run_swag(const SwagOpts& o) {
  ensure_dir(o.out);
  auto train_set = dataio::load_dataset(o.train_table, o.train_features, "train");
  auto dev_set = dataio::load_dataset(o.dev_table, o.dev_features, "dev");

  model::ModelSpec spec;
  model::ParamVector init;
  std::optional<dataio::FeatureNorm> norm;
  if (!o.from_checkpoint.empty()) {
    auto ckpt = model::load_checkpoint(o.from_checkpoint);
    spec = ckpt.spec;
    init = std::move(ckpt.params);
    norm = ckpt.feature_norm;
  } else {
    if (o.standardize) norm = dataio::compute_norm(train_set);
    spec = build_spec(o.model, train_set.feature_dim);
    numkit::RngState rng{o.sgd.seed, 0};
    init = model::init_params(spec, rng);
  }
  if (norm) {
    train_set = dataio::apply_norm(train_set, *norm);
    dev_set = dataio::apply_norm(dev_set, *norm);
  }
  if (train_set.feature_dim != spec.input_dim)
    throw Error::data("swag: dataset feature dim " + std::to_string(train_set.feature_dim) +
                      " does not match model input dim " + std::to_string(spec.input_dim));

  trainer::SwagPhaseConfig phase;
  phase.sgd = build_train_config(o.sgd);
  phase.snapshot_every = o.snapshot_every;
  phase.rank_max = o.rank_max;
  const auto result = trainer::run_swag_phase(spec, init, train_set, dev_set, phase);

  const auto& chosen = result.candidates[result.selected];
  auto posterior = chosen.posterior;
  posterior.feature_norm = norm;

  const fs::path out(o.out);
  const auto posterior_path = (out / "posterior.post").string();
  swag::save_posterior(posterior_path, posterior);
  const auto selected_path = (out / "selected_checkpoint.ckpt").string();
  model::save_checkpoint(selected_path, {spec, chosen.checkpoint.params, o.sgd.seed,
                                         chosen.checkpoint.iteration, norm});

  nlohmann::json candidates = nlohmann::json::array();
  for (const auto& c : result.candidates) {
    candidates.push_back({
        {"iteration", c.checkpoint.iteration},
        {"n_collected", c.posterior.n_collected},
        {"dev_system_srcc",
         c.dev_system_srcc ? nlohmann::json(*c.dev_system_srcc) : nlohmann::json(nullptr)},
    });
  }

  std::vector<std::string> argv = {
      "swag",
      "--train-table", o.train_table,
      "--train-features", o.train_features,
      "--dev-table", o.dev_table,
      "--dev-features", o.dev_features,
      "--out", o.out,
  };
  if (!o.from_checkpoint.empty())
    argv.insert(argv.end(), {"--from-checkpoint", o.from_checkpoint});
  argv.insert(argv.end(), {"--hidden", o.model.hidden, "--activation", o.model.activation});
  if (o.model.unbounded) argv.push_back("--unbounded");
  if (o.standardize) argv.push_back("--standardize");
  argv.insert(argv.end(), {"--snapshot-every", std::to_string(o.snapshot_every),
                           "--rank-max", std::to_string(o.rank_max)});
  append_sgd_argv(argv, o.sgd);

  nlohmann::json config = sgd_config_json(o.sgd);
  config["from_checkpoint"] = o.from_checkpoint;
  config["snapshot_every"] = o.snapshot_every;
  config["rank_max"] = o.rank_max;
  config["standardize"] = o.standardize;

  write_manifest(out, "swag", o.sgd.seed, argv, config,
                 {{"posterior", posterior_path},
                  {"selected_checkpoint", selected_path},
                  {"selected_index", result.selected},
                  {"candidates", candidates}});
}

struct PredictOpts {
  std::string posterior;
  std::string checkpoint;
  std::string table, features;
  std::string out;
  std::size_t k = 10;
  std::uint64_t seed = 0;
  std::string mode = "diag-lowrank";
};

void run_predict(const PredictOpts& o) {
  ensure_dir(o.out);
  if (o.posterior.empty() == o.checkpoint.empty())
    throw Error::usage("predict needs exactly one of --posterior or --checkpoint");

  auto data = dataio::load_dataset(o.table, o.features, "predict");
  std::vector<double> scores;
  if (!o.posterior.empty()) {
    const auto posterior = swag::load_posterior(o.posterior);
    if (posterior.feature_norm) data = dataio::apply_norm(data, *posterior.feature_norm);
    if (data.feature_dim != posterior.spec.input_dim)
      throw Error::data("predict: dataset feature dim does not match posterior model");
    scores = swag::bma_predict_batch(posterior, data,
                                     {o.k, o.seed, parse_mode(o.mode)});
  } else {
    const auto ckpt = model::load_checkpoint(o.checkpoint);
    if (ckpt.feature_norm) data = dataio::apply_norm(data, *ckpt.feature_norm);
    if (data.feature_dim != ckpt.spec.input_dim)
      throw Error::data("predict: dataset feature dim does not match checkpoint model");
    scores.reserve(data.records.size());
    for (const auto& r : data.records)
      scores.push_back(model::forward(ckpt.spec, ckpt.params, r.features));
  }

  std::vector<std::string> ids;
  ids.reserve(data.records.size());
  for (const auto& r : data.records) ids.push_back(r.utterance_id);
  const fs::path out(o.out);
  const auto pred_path = (out / "predictions.csv").string();
  write_predictions_csv(pred_path, ids, scores);

  std::vector<std::string> argv = {"predict"};
  if (!o.posterior.empty()) argv.insert(argv.end(), {"--posterior", o.posterior});
  if (!o.checkpoint.empty()) argv.insert(argv.end(), {"--checkpoint", o.checkpoint});
  argv.insert(argv.end(), {
      "--table", o.table, "--features", o.features, "--out", o.out,
      "--k", std::to_string(o.k), "--seed", std::to_string(o.seed), "--mode", o.mode,
  });
  nlohmann::json config = {
      {"posterior", o.posterior}, {"checkpoint", o.checkpoint}, {"k", o.k},
      {"seed", o.seed},           {"mode", o.mode},
  };
  write_manifest(out, "predict", o.seed, argv, config, {{"predictions", pred_path}});
}

struct InfluenceOpts {
  std::string checkpoint;
  std::string table, features;
  std::string out;
  std::size_t worst_k = 5;
  std::string test_ids;
  double damping = 0.01;
  std::string curvature = "mse";
  double curvature_delta = 1.0;
  std::string loss = "l1";
  double huber_delta = 1.0;
};

void run_influence(const InfluenceOpts& o) {
  ensure_dir(o.out);
  const auto ckpt = model::load_checkpoint(o.checkpoint);
  auto data = dataio::load_dataset(o.table, o.features, "train");
  if (ckpt.feature_norm) data = dataio::apply_norm(data, *ckpt.feature_norm);
  if (data.feature_dim != ckpt.spec.input_dim)
    throw Error::data("influence: dataset feature dim does not match checkpoint model");

  influence::InfluenceConfig cfg;
  cfg.damping = o.damping;
  cfg.curvature = {parse_loss_kind(o.curvature), o.curvature_delta};
  cfg.gradient_loss = {parse_loss_kind(o.loss), o.huber_delta};
  cfg.worst_k = o.worst_k;
  cfg.test_ids = split_commas(o.test_ids);

  const auto report = influence::debug_rank(ckpt.spec, ckpt.params, data, cfg);
  const fs::path out(o.out);
  const auto report_path = (out / "influence.json").string();
  influence::save_report(report, report_path);

  std::vector<std::string> argv = {
      "influence",
      "--checkpoint", o.checkpoint,
      "--table", o.table,
      "--features", o.features,
      "--out", o.out,
      "--worst-k", std::to_string(o.worst_k),
      "--test-ids", o.test_ids,
      "--damping", fmt(o.damping),
      "--curvature", o.curvature,
      "--curvature-delta", fmt(o.curvature_delta),
      "--loss", o.loss,
      "--huber-delta", fmt(o.huber_delta),
  };
  nlohmann::json config = {
      {"worst_k", o.worst_k},   {"test_ids", o.test_ids},
      {"damping", o.damping},   {"curvature", o.curvature},
      {"curvature_delta", o.curvature_delta}, {"loss", o.loss},
      {"huber_delta", o.huber_delta},
  };
  write_manifest(out, "influence", 0, argv, config, {{"report", report_path}});
}

struct FilterOpts {
  std::string table, features;
  std::string exclude;
  std::string exclude_file;
  std::string out;
};

void run_filter(const FilterOpts& o) {
  ensure_dir(o.out);
  if (o.exclude.empty() && o.exclude_file.empty())
    throw Error::usage("filter needs --exclude and/or --exclude-file");
  std::set<std::string> exclude;
  for (auto& id : split_commas(o.exclude)) exclude.insert(id);
  if (!o.exclude_file.empty()) {
    std::ifstream is(o.exclude_file);
    if (!is) throw Error::data("exclude file not found: " + o.exclude_file);
    std::string line;
    while (std::getline(is, line)) {
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.empty() || line[0] == '#') continue;
      exclude.insert(line);
    }
  }

  const auto data = dataio::load_dataset(o.table, o.features, "filter");
  std::size_t unknown = 0;
  const auto filtered = dataio::filter_by_ids(data, exclude, &unknown);
  const fs::path out(o.out);
  const auto table_path = (out / "filtered.csv").string();
  const auto features_path = (out / "filtered.swgf").string();
  dataio::save_dataset(filtered, table_path, features_path);

  std::vector<std::string> argv = {
      "filter", "--table", o.table, "--features", o.features, "--out", o.out,
  };
  if (!o.exclude.empty()) argv.insert(argv.end(), {"--exclude", o.exclude});
  if (!o.exclude_file.empty())
    argv.insert(argv.end(), {"--exclude-file", o.exclude_file});
  nlohmann::json config = {
      {"exclude", o.exclude},
      {"exclude_file", o.exclude_file},
      {"removed", data.records.size() - filtered.records.size()},
      {"unknown_ids", unknown},
  };
  write_manifest(out, "filter", 0, argv, config,
                 {{"table", table_path}, {"features", features_path}});
}

struct EvaluateOpts {
  std::string predictions;
  std::string table;
  std::string features;
  std::string out;
};

void run_evaluate(const EvaluateOpts& o) {
  ensure_dir(o.out);
  const auto data = o.features.empty()
                        ? dataio::load_table(o.table, "eval")
                        : dataio::load_dataset(o.table, o.features, "eval");
  const auto preds = read_predictions_csv(o.predictions);
  const auto report = metrics::evaluate(preds, data);

  const fs::path out(o.out);
  const auto json_path = (out / "metrics.json").string();
  const auto table_path = (out / "metrics.txt").string();
  metrics::save_report(report, json_path, table_path);
  std::cout << metrics::render_table(report);

  std::vector<std::string> argv = {
      "evaluate", "--predictions", o.predictions, "--table", o.table,
  };
  if (!o.features.empty()) argv.insert(argv.end(), {"--features", o.features});
  argv.insert(argv.end(), {"--out", o.out});
  nlohmann::json config = {{"predictions", o.predictions}, {"table", o.table},
                           {"features", o.features}};
  write_manifest(out, "evaluate", 0, argv, config,
                 {{"metrics_json", json_path}, {"metrics_table", table_path}});
}

void add_sgd_options(CLI::App* sub, SgdOpts& o) {
  sub->add_option("--iterations", o.iterations, "Optimizer steps");
  sub->add_option("--lr", o.lr, "Peak learning rate")->check(CLI::PositiveNumber);
  sub->add_option("--lr-min", o.lr_min, "Cosine floor")->check(CLI::NonNegativeNumber);
  sub->add_option("--momentum", o.momentum, "SGD momentum");
  sub->add_option("--schedule", o.schedule, "cosine|constant")
      ->check(CLI::IsMember({"cosine", "constant"}));
  sub->add_option("--cosine-period", o.cosine_period, "Cosine half-period in steps");
  sub->add_option("--batch-size", o.batch_size, "Micro-batch size");
  sub->add_option("--accum-steps", o.accum_steps, "Micro-batches per optimizer step");
  sub->add_option("--seed", o.seed, "RNG seed");
  sub->add_option("--loss", o.loss, "l1|mse|huber")
      ->check(CLI::IsMember({"l1", "mse", "huber"}));
  sub->add_option("--huber-delta", o.huber_delta, "Huber transition point");
  sub->add_option("--checkpoint-interval", o.checkpoint_interval,
                  "Steps between checkpoints");
}

void add_model_options(CLI::App* sub, ModelOpts& o) {
  sub->add_option("--hidden", o.hidden, "Hidden widths, comma separated (empty = linear)");
  sub->add_option("--activation", o.activation, "tanh|relu")
      ->check(CLI::IsMember({"tanh", "relu"}));
  sub->add_flag("--unbounded", o.unbounded, "Raw linear output instead of 1..5 sigmoid");
}

}  // namespace

void write_predictions_csv(const std::filesystem::path& path,
                           std::span<const std::string> ids,
                           std::span<const double> values) {
  if (ids.size() != values.size())
    throw Error::internal("write_predictions_csv: length mismatch");
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error::data("cannot write predictions: " + path.string());
  os << "utterance_id,prediction\n";
  for (std::size_t i = 0; i < ids.size(); ++i)
    os << ids[i] << ',' << dataio::format_double(values[i]) << '\n';
}

std::map<std::string, double> read_predictions_csv(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw Error::data("predictions file not found: " + path.string());
  std::string line;
  if (!std::getline(is, line))
    throw Error::data("predictions file is empty: " + path.string());
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "utterance_id,prediction")
    throw Error::data("predictions file has bad header (want utterance_id,prediction): " +
                      path.string());
  std::map<std::string, double> preds;
  std::size_t lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos)
      throw Error::data("predictions line " + std::to_string(lineno) + " has no comma");
    const std::string id = line.substr(0, comma);
    const std::string val = line.substr(comma + 1);
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(val.data(), val.data() + val.size(), v);
    if (ec != std::errc{} || ptr != val.data() + val.size())
      throw Error::data("predictions line " + std::to_string(lineno) +
                        " has unparsable value '" + val + "'");
    if (!preds.emplace(id, v).second)
      throw Error::data("duplicate prediction for utterance " + id);
  }
  return preds;
}

int run(const std::vector<std::string>& args) {
  CLI::App app{"Bounded MOS prediction heads over precomputed features: "
               "SGD training, SWAG posterior collection, BMA inference, "
               "influence-function data debugging and rank-correlation evaluation"};
  app.name("moshead");
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);
  app.set_config("--config", "",
                 "INI config file; [subcommand] sections hold that command's flags");

  GenSynthOpts gen;
  auto* gen_cmd = app.add_subcommand("gen-synth", "Generate synthetic MOS datasets");
  gen_cmd->add_option("--out", gen.out, "Output directory")->required();
  gen_cmd->add_option("--systems", gen.cfg.train_systems, "Training systems");
  gen_cmd->add_option("--utts", gen.cfg.train_utts, "Utterances per training system");
  gen_cmd->add_option("--dev-systems", gen.cfg.dev_systems, "Dev systems (0 = none)");
  gen_cmd->add_option("--dev-utts", gen.cfg.dev_utts, "Utterances per dev system (0 = --utts)");
  gen_cmd->add_option("--test-systems", gen.cfg.test_systems, "Test systems (0 = none)");
  gen_cmd->add_option("--test-utts", gen.cfg.test_utts,
                      "Utterances per test system (0 = --utts)");
  gen_cmd->add_option("--feature-dim", gen.cfg.feature_dim, "Feature dimension");
  gen_cmd->add_option("--noise", gen.cfg.noise, "Label noise stddev");
  gen_cmd->add_option("--jitter", gen.cfg.jitter, "Utterance jitter stddev");
  gen_cmd->add_option("--corrupt", gen.cfg.corrupt, "Mislabeled training records");
  gen_cmd->add_option("--seed", gen.cfg.seed, "RNG seed");
  gen_cmd->callback([&] { run_gen_synth(gen); });

  TrainOpts tr;
  auto* tr_cmd = app.add_subcommand("train", "SGD training with cosine schedule");
  tr_cmd->add_option("--train-table", tr.train_table, "Training CSV")->required();
  tr_cmd->add_option("--train-features", tr.train_features, "Training SWGF")->required();
  tr_cmd->add_option("--dev-table", tr.dev_table, "Dev CSV");
  tr_cmd->add_option("--dev-features", tr.dev_features, "Dev SWGF");
  tr_cmd->add_option("--out", tr.out, "Run directory")->required();
  tr_cmd->add_flag("--standardize", tr.standardize,
                   "Per-dimension feature standardization (train statistics)");
  add_model_options(tr_cmd, tr.model);
  add_sgd_options(tr_cmd, tr.sgd);
  tr_cmd->callback([&] { run_train(tr); });

  SwagOpts sw;
  auto* sw_cmd = app.add_subcommand("swag", "Constant-lr SWAG collection and selection");
  sw_cmd->add_option("--train-table", sw.train_table, "Training CSV")->required();
  sw_cmd->add_option("--train-features", sw.train_features, "Training SWGF")->required();
  sw_cmd->add_option("--dev-table", sw.dev_table, "Dev CSV")->required();
  sw_cmd->add_option("--dev-features", sw.dev_features, "Dev SWGF")->required();
  sw_cmd->add_option("--from-checkpoint", sw.from_checkpoint,
                     "Start from a trained checkpoint (omit to collect from scratch)");
  sw_cmd->add_option("--out", sw.out, "Run directory")->required();
  sw_cmd->add_flag("--standardize", sw.standardize,
                   "Standardize features (fresh-init runs only)");
  add_model_options(sw_cmd, sw.model);
  sw_cmd->add_option("--snapshot-every", sw.snapshot_every,
                     "Steps between snapshots (0 = one epoch)");
  sw_cmd->add_option("--rank-max", sw.rank_max, "Deviation buffer capacity");
  add_sgd_options(sw_cmd, sw.sgd);
  sw.sgd.iterations = 1000;
  sw.sgd.schedule = "constant";
  sw.sgd.batch_size = 4;
  sw.sgd.accum_steps = 2;
  sw_cmd->callback([&] { run_swag(sw); });

  PredictOpts pr;
  auto* pr_cmd = app.add_subcommand("predict", "Score a dataset (BMA or plain forward)");
  pr_cmd->add_option("--posterior", pr.posterior, "Posterior file (BMA prediction)");
  pr_cmd->add_option("--checkpoint", pr.checkpoint, "Checkpoint file (plain prediction)");
  pr_cmd->add_option("--table", pr.table, "Dataset CSV")->required();
  pr_cmd->add_option("--features", pr.features, "Dataset SWGF")->required();
  pr_cmd->add_option("--out", pr.out, "Output directory")->required();
  pr_cmd->add_option("--k", pr.k, "Posterior samples for BMA");
  pr_cmd->add_option("--seed", pr.seed, "Sampling seed");
  pr_cmd->add_option("--mode", pr.mode, "mean-only|diag|diag-lowrank")
      ->check(CLI::IsMember({"mean-only", "diag", "diag-lowrank"}));
  pr_cmd->callback([&] { run_predict(pr); });

  InfluenceOpts inf;
  auto* inf_cmd = app.add_subcommand("influence", "Rank training data by influence");
  inf_cmd->add_option("--checkpoint", inf.checkpoint, "Trained checkpoint")->required();
  inf_cmd->add_option("--table", inf.table, "Training CSV")->required();
  inf_cmd->add_option("--features", inf.features, "Training SWGF")->required();
  inf_cmd->add_option("--out", inf.out, "Output directory")->required();
  inf_cmd->add_option("--worst-k", inf.worst_k, "Test points: k worst-loss records");
  inf_cmd->add_option("--test-ids", inf.test_ids, "Explicit test ids, comma separated");
  inf_cmd->add_option("--damping", inf.damping, "Hessian damping lambda");
  inf_cmd->add_option("--curvature", inf.curvature, "mse|huber")
      ->check(CLI::IsMember({"mse", "huber"}));
  inf_cmd->add_option("--curvature-delta", inf.curvature_delta, "Huber delta for curvature");
  inf_cmd->add_option("--loss", inf.loss, "Gradient loss: l1|mse|huber")
      ->check(CLI::IsMember({"l1", "mse", "huber"}));
  inf_cmd->add_option("--huber-delta", inf.huber_delta, "Huber delta for gradients");
  inf_cmd->callback([&] { run_influence(inf); });

  FilterOpts fi;
  auto* fi_cmd = app.add_subcommand("filter", "Drop records by utterance id");
  fi_cmd->add_option("--table", fi.table, "Dataset CSV")->required();
  fi_cmd->add_option("--features", fi.features, "Dataset SWGF")->required();
  fi_cmd->add_option("--exclude", fi.exclude, "Ids to drop, comma separated");
  fi_cmd->add_option("--exclude-file", fi.exclude_file, "File with one id per line");
  fi_cmd->add_option("--out", fi.out, "Output directory")->required();
  fi_cmd->callback([&] { run_filter(fi); });

  EvaluateOpts ev;
  auto* ev_cmd = app.add_subcommand("evaluate", "Utterance- and system-level metrics");
  ev_cmd->add_option("--predictions", ev.predictions, "Predictions CSV")->required();
  ev_cmd->add_option("--table", ev.table, "Labeled dataset CSV")->required();
  ev_cmd->add_option("--features", ev.features, "Dataset SWGF (optional)");
  ev_cmd->add_option("--out", ev.out, "Output directory")->required();
  ev_cmd->callback([&] { run_evaluate(ev); });

  std::vector<const char*> argv;
  argv.reserve(args.size() + 1);
  argv.push_back("moshead");
  for (const auto& a : args) argv.push_back(a.c_str());

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    std::cout << app.help();
    return 0;
  } catch (const CLI::CallForVersion&) {
    std::cout << kVersion << '\n';
    return 0;
  } catch (const CLI::ParseError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return 1;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return e.exit_code();
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << '\n';
    return 4;
  }
  return 0;
}

}  // namespace moshead::cli
