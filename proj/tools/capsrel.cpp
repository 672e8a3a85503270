// capsrel: train / eval / predict / inspect / sweep / ttest over JSONL
// relation corpora. See README for the config format and exit codes.

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "capsrel/serialize.hpp"
#include "capsrel/train.hpp"

using namespace capsrel;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

constexpr int kOk = 0;
constexpr int kBadConfig = 2;       // config/data errors, missing files
constexpr int kTrainAborted = 3;    // non-finite loss
constexpr int kSchemaMismatch = 4;  // input labels unknown to the model
constexpr int kNoRoutingState = 5;  // inspect on a baseline head

struct RunConfig {
  std::string profile = "semeval";
  std::string schema_path, train_path, dev_path, test_path, emb_path;
  std::string output_dir = "out";
  ModelDims dims;
  std::string head = "capsule", routing = "attentive", loss = "sliding";
  MarginConfig margin;  // gamma 0.4; lambda profile-dependent
  TrainConfig train;
};

void require_file(const std::string& path, const char* what) {
  if (path.empty()) throw ConfigError(std::string(what) + " path not set");
  if (!fs::exists(path)) throw ConfigError(std::string(what) + " file not found: " + path);
}

std::string toml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == '\\' || c == '"') out.push_back('\\');
    out.push_back(c);
  }
  return out;
}

// Effective (defaults- and profile-merged) configuration; re-running train
// with this file reproduces the run bit for bit.
void write_effective_config(const std::string& path, const RunConfig& rc) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw ConfigError("cannot write config dump: " + path);
  os << std::setprecision(17);
  auto str = [&](const char* k, const std::string& v) {
    os << k << " = \"" << toml_escape(v) << "\"\n";
  };
  str("profile", rc.profile);
  str("schema", rc.schema_path);
  str("train", rc.train_path);
  str("dev", rc.dev_path);
  str("test", rc.test_path);
  str("embeddings", rc.emb_path);
  str("output_dir", rc.output_dir);
  os << "word_dim = " << rc.dims.word_dim << "\n"
     << "pos_dim = " << rc.dims.pos_dim << "\n"
     << "max_dist = " << rc.dims.max_dist << "\n"
     << "hidden = " << rc.dims.hidden << "\n"
     << "d_u = " << rc.dims.d_u << "\n"
     << "d_r = " << rc.dims.d_r << "\n"
     << "iterations = " << rc.dims.iterations << "\n";
  str("head", rc.head);
  str("routing", rc.routing);
  str("loss", rc.loss);
  os << "gamma = " << rc.margin.gamma << "\n"
     << "lambda = " << rc.margin.lambda << "\n"
     << "b_init = " << rc.margin.b_init << "\n"
     << "lr = " << rc.train.lr << "\n"
     << "batch = " << rc.train.batch << "\n"
     << "epochs = " << rc.train.epochs << "\n"
     << "dropout = " << rc.train.dropout << "\n"
     << "l2 = " << rc.train.l2 << "\n"
     << "seed = " << rc.train.seed << "\n"
     << "dev_fraction = " << rc.train.dev_fraction << "\n"
     << "patience = " << rc.train.patience << "\n";
}

void write_json(const std::string& path, const json& j) {
  if (path.empty()) {
    std::cout << j.dump(2) << "\n";
    return;
  }
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw ConfigError("cannot write output: " + path);
  os << j.dump(2) << "\n";
}

json prediction_json(const SentenceExample& ex, const PredictionResult& pred,
                     const RelationSchema& schema) {
  json names = json::array();
  for (int l : pred.labels) names.push_back(schema.relations[l]);
  return json{{"tokens", ex.tokens}, {"head", ex.head},     {"tail", ex.tail},
              {"scores", pred.scores}, {"labels", names},   {"na", pred.na}};
}

int cmd_train(RunConfig& rc) {
  require_file(rc.schema_path, "schema");
  require_file(rc.train_path, "train corpus");
  if (!rc.dev_path.empty()) require_file(rc.dev_path, "dev corpus");
  if (!rc.test_path.empty()) require_file(rc.test_path, "test corpus");
  if (!rc.emb_path.empty()) require_file(rc.emb_path, "embedding table");
  rc.train.validate();
  rc.dims.validate();

  RelationSchema schema = RelationSchema::load(rc.schema_path);
  auto train = load_corpus(rc.train_path, schema);
  std::vector<SentenceExample> dev, test;
  if (!rc.dev_path.empty()) dev = load_corpus(rc.dev_path, schema);
  if (!rc.test_path.empty()) test = load_corpus(rc.test_path, schema);

  Rng rng(rc.train.seed);
  auto vocab = build_vocab(train);
  EmbeddingTable table = rc.emb_path.empty()
                             ? random_embeddings(vocab, rc.dims.word_dim, rng)
                             : project_vocab(load_embeddings(rc.emb_path, rc.dims.word_dim, rng), vocab);
  auto model = init_model<double>(rc.dims, schema, table, vocab, head_kind_from(rc.head),
                                  routing_kind_from(rc.routing), loss_kind_from(rc.loss),
                                  rc.margin, rng);

  fs::create_directories(rc.output_dir);
  const fs::path out(rc.output_dir);
  write_effective_config((out / "config.toml").string(), rc);

  auto res = train_model(model, train, rc.train, nullptr, dev.empty() ? nullptr : &dev);
  save_model(model, (out / "model.bin").string());

  {
    std::ofstream csv(out / "loss_trace.csv", std::ios::trunc);
    csv << std::setprecision(17) << "epoch,loss,dev_f1\n";
    for (std::size_t e = 0; e < res.loss_trace.size(); ++e)
      csv << e << "," << res.loss_trace[e] << "," << res.dev_f1_trace[e] << "\n";
  }

  const std::vector<SentenceExample>& eval_on = !test.empty() ? test : (!dev.empty() ? dev : train);
  auto rep = evaluate_model(model, eval_on);
  write_json((out / "eval.json").string(), rep.to_json());
  {
    std::ofstream pr(out / "pr.csv", std::ios::trunc);
    rep.write_pr_csv(pr);
  }
  std::cout << "trained " << res.epochs_run << " epochs; best dev F1 " << res.best_dev_f1
            << " at epoch " << res.best_epoch << "; artifacts in " << rc.output_dir << "\n";
  return kOk;
}

int cmd_eval(const std::string& model_path, const std::string& input, const std::string& output,
             const std::string& pr_csv) {
  require_file(model_path, "model");
  require_file(input, "input corpus");
  auto model = load_model<double>(model_path);
  std::vector<SentenceExample> corpus;
  try {
    corpus = load_corpus(input, model.schema);
  } catch (const SchemaError& e) {
    std::cerr << e.what() << "\n";
    return kSchemaMismatch;
  }
  auto rep = evaluate_model(model, corpus);
  write_json(output, rep.to_json());
  if (!pr_csv.empty()) {
    std::ofstream os(pr_csv, std::ios::trunc);
    if (!os) throw ConfigError("cannot write PR csv: " + pr_csv);
    rep.write_pr_csv(os);
  }
  return kOk;
}

int cmd_predict(const std::string& model_path, const std::string& input,
                const std::string& output) {
  require_file(model_path, "model");
  require_file(input, "input corpus");
  auto model = load_model<double>(model_path);
  std::vector<SentenceExample> corpus;
  try {
    corpus = load_corpus(input, model.schema);
  } catch (const SchemaError& e) {
    std::cerr << e.what() << "\n";
    return kSchemaMismatch;
  }
  auto pred = predict_all(model, corpus);
  std::ofstream os(output, std::ios::trunc);
  if (!os) throw ConfigError("cannot write output: " + output);
  for (std::size_t i = 0; i < corpus.size(); ++i)
    os << prediction_json(corpus[i], pred[i], model.schema).dump() << "\n";
  return kOk;
}

int cmd_inspect(const std::string& model_path, const std::string& input,
                const std::string& output) {
  require_file(model_path, "model");
  auto model = load_model<double>(model_path);
  if (model.head != HeadKind::kCapsule) {
    std::cerr << "inspect needs a capsule-head model; " << to_string(model.head)
              << " heads keep no routing state\n";
    return kNoRoutingState;
  }
  require_file(input, "input corpus");
  std::vector<SentenceExample> corpus;
  try {
    corpus = load_corpus(input, model.schema);
  } catch (const SchemaError& e) {
    std::cerr << e.what() << "\n";
    return kSchemaMismatch;
  }
  json out = json::array();
  for (const auto& ex : corpus) {
    auto scored = score_sentence(model, ex, true);
    json names = json::array();
    for (int l : scored.pred.labels) names.push_back(model.schema.relations[l]);
    json j{{"tokens", ex.tokens},
           {"head", ex.head},
           {"tail", ex.tail},
           {"scores", scored.pred.scores},
           {"labels", names},
           {"na", scored.pred.na}};
    if (scored.trace) {
      j["alpha"] = scored.trace->alpha_per_token;
      j["couplings"] = scored.trace->couplings;
      j["iterations"] = scored.trace->iterations;
    }
    out.push_back(std::move(j));
  }
  write_json(output, out);
  return kOk;
}

int cmd_sweep(const std::string& model_path, const std::string& input,
              const std::string& output) {
  require_file(model_path, "model");
  require_file(input, "input corpus");
  auto model = load_model<double>(model_path);
  if (model.head == HeadKind::kCapsule)
    throw ConfigError("threshold sweep applies to baseline heads; capsule models decode against B");
  std::vector<SentenceExample> corpus;
  try {
    corpus = load_corpus(input, model.schema);
  } catch (const SchemaError& e) {
    std::cerr << e.what() << "\n";
    return kSchemaMismatch;
  }
  auto best = sweep_model(model, corpus);
  write_json(output, json{{"threshold", best.threshold}, {"report", best.report.to_json()}});
  return kOk;
}

std::vector<double> read_fold_scores(const std::string& path) {
  require_file(path, "fold scores");
  std::ifstream is(path);
  std::vector<double> out;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    std::istringstream ls(line);
    double v;
    if (ls >> v)
      out.push_back(v);
    else if (!line.empty() && line.find_first_not_of(" \t\r") != std::string::npos)
      throw ParseError(path + ":" + std::to_string(lineno) + ": not a number: " + line);
  }
  return out;
}

int cmd_ttest(const std::string& path_a, const std::string& path_b, const std::string& output) {
  auto a = read_fold_scores(path_a), b = read_fold_scores(path_b);
  auto r = paired_ttest(a, b);
  write_json(output, json{{"n", a.size()},
                          {"t", r.t},
                          {"p", r.p},
                          {"mean_diff", r.mean_diff},
                          {"ci_lo", r.ci_lo},
                          {"ci_hi", r.ci_hi},
                          {"degenerate", r.degenerate}});
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"attentive-capsule relation extractor"};
  app.require_subcommand(1);
  app.fallthrough();  // train options live on the root so --config can fill them
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  app.footer(
      "exit codes: 0 ok, 2 config/data error, 3 training aborted,\n"
      "            4 input schema does not match the model, 5 inspect on a baseline head\n"
      "env: CAPSREL_THREADS caps evaluation parallelism");

  RunConfig rc;
  // Table-2 style defaults for the semeval profile; the nyt profile flips
  // lambda/dropout/l2 below unless they were set explicitly.
  rc.margin.lambda = 0.5;
  rc.train.dropout = 0.7;
  rc.train.l2 = 0.0;

  app.set_config("--config", "", "TOML config file (train keys)");
  app.add_option("--profile", rc.profile, "hyper-parameter profile: semeval | nyt")
      ->capture_default_str();
  app.add_option("--schema", rc.schema_path, "relation schema JSON");
  app.add_option("--train", rc.train_path, "training corpus JSONL");
  app.add_option("--dev", rc.dev_path, "dev corpus JSONL (else dev_fraction split)");
  app.add_option("--test", rc.test_path, "test corpus JSONL for the final report");
  app.add_option("--embeddings", rc.emb_path, "pre-trained word vectors (word v1..vd lines)");
  app.add_option("--output-dir,--output_dir", rc.output_dir, "artifact directory")
      ->capture_default_str();
  app.add_option("--word-dim,--word_dim", rc.dims.word_dim)->capture_default_str();
  app.add_option("--pos-dim,--pos_dim", rc.dims.pos_dim)->capture_default_str();
  app.add_option("--max-dist,--max_dist", rc.dims.max_dist)->capture_default_str();
  app.add_option("--hidden", rc.dims.hidden)->capture_default_str();
  app.add_option("--d-u,--d_u", rc.dims.d_u)->capture_default_str();
  app.add_option("--d-r,--d_r", rc.dims.d_r)->capture_default_str();
  app.add_option("--iterations", rc.dims.iterations, "routing iterations")
      ->capture_default_str();
  app.add_option("--head", rc.head, "capsule | max | avg | att")->capture_default_str();
  app.add_option("--routing", rc.routing, "attentive | dynamic")->capture_default_str();
  app.add_option("--loss", rc.loss, "sliding | fixed")->capture_default_str();
  app.add_option("--gamma", rc.margin.gamma, "margin half-width")->capture_default_str();
  auto* opt_lambda = app.add_option("--lambda", rc.margin.lambda, "absent-relation down-weight")
                         ->capture_default_str();
  app.add_option("--b-init,--b_init", rc.margin.b_init, "initial NA boundary")
      ->capture_default_str();
  app.add_option("--lr", rc.train.lr)->capture_default_str();
  app.add_option("--batch", rc.train.batch)->capture_default_str();
  app.add_option("--epochs", rc.train.epochs)->capture_default_str();
  auto* opt_dropout = app.add_option("--dropout", rc.train.dropout)->capture_default_str();
  auto* opt_l2 = app.add_option("--l2", rc.train.l2)->capture_default_str();
  app.add_option("--seed", rc.train.seed)->capture_default_str();
  app.add_option("--dev-fraction,--dev_fraction", rc.train.dev_fraction)->capture_default_str();
  app.add_option("--patience", rc.train.patience)->capture_default_str();

  auto* train = app.add_subcommand("train", "train a model from the config/flags");
  train->add_option("--output", rc.output_dir, "artifact directory (same as --output-dir)");

  std::string model_path, input_path, output_path, pr_csv, fold_a, fold_b;

  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on a labeled corpus");
  eval->add_option("--model", model_path)->required();
  eval->add_option("--input", input_path)->required();
  eval->add_option("--output", output_path, "report JSON (default stdout)");
  eval->add_option("--pr", pr_csv, "write PR points as CSV");

  auto* predict = app.add_subcommand("predict", "score sentences and decode label sets");
  predict->add_option("--model", model_path)->required();
  predict->add_option("--input", input_path)->required();
  predict->add_option("--output", output_path, "predictions JSONL")->required();

  auto* inspect = app.add_subcommand("inspect", "dump routing diagnostics per sentence");
  inspect->add_option("--model", model_path)->required();
  inspect->add_option("--input", input_path)->required();
  inspect->add_option("--output", output_path, "diagnostics JSON (default stdout)");

  auto* sweep = app.add_subcommand("sweep", "decode-threshold sweep for a baseline head");
  sweep->add_option("--model", model_path)->required();
  sweep->add_option("--input", input_path)->required();
  sweep->add_option("--output", output_path, "sweep JSON (default stdout)");

  auto* ttest = app.add_subcommand("ttest", "paired t-test over two fold-score files");
  ttest->add_option("scores_a", fold_a, "fold F1 list, one per line")->required();
  ttest->add_option("scores_b", fold_b, "fold F1 list, one per line")->required();
  ttest->add_option("--output", output_path, "result JSON (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kBadConfig;
  }

  try {
    if (*train) {
      if (rc.profile == "nyt") {
        if (opt_lambda->count() == 0) rc.margin.lambda = 1.0;
        if (opt_dropout->count() == 0) rc.train.dropout = 0.0;
        if (opt_l2->count() == 0) rc.train.l2 = 0.0001;
      } else if (rc.profile != "semeval") {
        throw ConfigError("unknown profile: " + rc.profile + " (expected semeval or nyt)");
      }
      return cmd_train(rc);
    }
    if (*eval) return cmd_eval(model_path, input_path, output_path, pr_csv);
    if (*predict) return cmd_predict(model_path, input_path, output_path);
    if (*inspect) return cmd_inspect(model_path, input_path, output_path);
    if (*sweep) return cmd_sweep(model_path, input_path, output_path);
    if (*ttest) return cmd_ttest(fold_a, fold_b, output_path);
  } catch (const TrainAbort& e) {
    std::cerr << e.what() << "\n";
    return kTrainAborted;
  } catch (const std::exception& e) {
    std::cerr << e.what() << "\n";
    return kBadConfig;
  }
  return kBadConfig;
}
