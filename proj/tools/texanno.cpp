// texanno command-line driver: synth, prep, train, segment, rank, evaluate,
// audit and serve over one store directory.

#include <csignal>
#include <cstdlib>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <json.hpp>

#include "texanno/errors.hpp"
#include "texanno/gateway.hpp"
#include "texanno/pipeline.hpp"
#include "texanno/store.hpp"

using namespace texanno;
using nlohmann::json;

namespace {

struct Common {
  std::string store = "store";
  std::string config;
  std::uint64_t seed_value = 0;
  std::vector<CLI::Option*> seed_options;
  std::optional<std::uint64_t> seed;
};

PipelineConfig resolve_config(const Common& c) {
  PipelineConfig config = c.config.empty() ? PipelineConfig{} : load_config(c.config);
  if (c.seed) config.seed = *c.seed;
  config.validate();
  return config;
}

Gateway* g_gateway = nullptr;

void on_signal(int) {
  if (g_gateway) g_gateway->stop();
}

std::map<std::string, std::string> parse_tokens(const std::vector<std::string>& specs) {
  std::map<std::string, std::string> tokens;
  for (const auto& spec : specs) {
    const auto eq = spec.find('=');
    if (eq == std::string::npos || eq == 0 || eq + 1 == spec.size()) {
      throw Error(ErrorCode::kConfiguration, "token must look like TOKEN=ANNOTATOR, got '" + spec + "'");
    }
    tokens[spec.substr(0, eq)] = spec.substr(eq + 1);
  }
  return tokens;
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= s.size()) {
    const auto comma = s.find(',', start);
    const auto piece = s.substr(start, comma == std::string::npos ? std::string::npos : comma - start);
    if (!piece.empty()) out.push_back(piece);
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Texture-based annotation proposals for forensic image corpora"};
  app.require_subcommand(1);
  Common common;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--store", common.store, "Store directory")->capture_default_str()->envname("TEXANNO_STORE");
    sub->add_option("--config", common.config, "JSON config file")->check(CLI::ExistingFile);
    common.seed_options.push_back(sub->add_option("--seed", common.seed_value, "Master seed (overrides the config)"));
  };

  auto* synth = app.add_subcommand("synth", "Generate the synthetic train and eval corpus");
  add_common(synth);

  auto* prep = app.add_subcommand("prep", "Build the training dataset from train images");
  add_common(prep);

  auto* train_cmd = app.add_subcommand("train", "Train the patch classifier");
  add_common(train_cmd);

  std::string model_id = "latest";
  std::string split;
  auto* segment = app.add_subcommand("segment", "Propose segments for a split");
  add_common(segment);
  segment->add_option("--model", model_id, "Model version")->capture_default_str();
  segment->add_option("--split", split, "eval, train, unlabeled or all");

  std::string rank_class;
  std::size_t rank_k = 10;
  std::string rank_out;
  auto* rank = app.add_subcommand("rank", "Rank unannotated images for a class");
  add_common(rank);
  rank->add_option("--class", rank_class, "Class to rank for")->required();
  rank->add_option("--k", rank_k, "Queue length")->capture_default_str();
  rank->add_option("--model", model_id, "Model version")->capture_default_str();
  rank->add_option("--out", rank_out, "Write the ranked manifest as JSON");

  std::string report_out;
  auto* evaluate = app.add_subcommand("evaluate", "Score stored proposals against eval masks");
  add_common(evaluate);
  evaluate->add_option("--model", model_id, "Model version")->capture_default_str();
  evaluate->add_option("--out", report_out, "Also write the full report as JSON");

  auto* audit = app.add_subcommand("audit", "Check store referential integrity");
  add_common(audit);

  std::string host = "127.0.0.1";
  int port = 8080;
  std::vector<std::string> token_specs;
  std::size_t workers = 1;
  auto* serve = app.add_subcommand("serve", "Run the HTTP gateway");
  add_common(serve);
  serve->add_option("--host", host)->capture_default_str();
  serve->add_option("--port", port)->capture_default_str()->check(CLI::Range(0, 65535))->envname("TEXANNO_PORT");
  serve->add_option("--token", token_specs, "TOKEN=ANNOTATOR, repeatable (env TEXANNO_TOKENS, comma separated)");
  serve->add_option("--workers", workers, "Job worker threads")->capture_default_str()->check(CLI::Range(1, 64));

  CLI11_PARSE(app, argc, argv);

  for (auto* opt : common.seed_options) {
    if (opt->count() > 0) common.seed = common.seed_value;
  }

  try {
    PipelineConfig config = resolve_config(common);
    if (!split.empty()) {
      config.segment_split = split;
      config.validate();
    }
    std::map<std::string, std::string> tokens;
    if (serve->parsed()) {
      if (token_specs.empty()) {
        if (const char* env = std::getenv("TEXANNO_TOKENS")) token_specs = split_list(env);
      }
      tokens = parse_tokens(token_specs);
      if (tokens.empty()) throw Error(ErrorCode::kConfiguration, "serve needs at least one --token");
    }

    Store store(common.store);

    if (synth->parsed()) {
      const auto s = generate_corpus(store, config);
      std::cout << "train images: " << s.train_images << "\neval images: " << s.eval_images
                << "\nannotations: " << s.annotations << "\nmanifest: " << s.manifest_sha256 << "\n";
    } else if (prep->parsed()) {
      const auto d = run_prep(store, config);
      std::map<std::string, std::pair<std::size_t, std::size_t>> counts;
      for (const auto& p : d.train) ++counts[p.label].first;
      for (const auto& p : d.validation) ++counts[p.label].second;
      std::cout << "dataset " << config.dataset << ": " << d.train.size() << " train, " << d.validation.size()
                << " validation patches\n";
      for (const auto& cls : d.class_roster) {
        std::cout << "  " << cls << ": " << counts[cls].first << " / " << counts[cls].second << "\n";
      }
    } else if (train_cmd->parsed()) {
      const auto model = run_train(store, config);
      std::cout << "model " << model.version() << " (" << model.num_classes() << " classes)\n"
                << "final train loss: " << model.meta().final_train_loss << "\n";
      if (model.meta().final_validation_loss) {
        std::cout << "final validation loss: " << *model.meta().final_validation_loss << "\n";
      }
      const auto& precision = model.meta().validation_precision;
      for (std::size_t k = 0; k < precision.size(); ++k) {
        std::cout << "  " << model.roster()[k] << " validation precision: ";
        if (precision[k]) {
          std::cout << *precision[k] << "\n";
        } else {
          std::cout << "n/a\n";
        }
      }
    } else if (segment->parsed()) {
      const auto proposals = run_segment(store, config, model_id);
      std::cout << proposals.size() << " proposals on split " << config.segment_split << "\n";
    } else if (rank->parsed()) {
      const auto queue = run_rank(store, config, rank_class, rank_k, model_id);
      json manifest = {{"class", rank_class}, {"k", rank_k}, {"items", json::array()}};
      for (std::size_t i = 0; i < queue.size(); ++i) {
        std::cout << i + 1 << "\t" << queue[i].image_id << "\t" << queue[i].presence_score << "\t"
                  << queue[i].support << "\n";
        manifest["items"].push_back(to_json(queue[i]));
      }
      if (!rank_out.empty()) write_file_atomic(rank_out, manifest.dump(2) + "\n");
    } else if (evaluate->parsed()) {
      const auto report = run_evaluate(store, config, model_id);
      std::cout << report.summary_table();
      if (!report_out.empty()) write_file_atomic(report_out, report.to_json().dump(2) + "\n");
    } else if (audit->parsed()) {
      const auto issues = store.audit();
      for (const auto& i : issues) std::cout << i << "\n";
      if (!issues.empty()) throw Error(ErrorCode::kIntegrity, std::to_string(issues.size()) + " integrity issue(s)");
      std::cout << "store consistent\n";
    } else if (serve->parsed()) {
      GatewayOptions options;
      options.tokens = tokens;
      options.workers = workers;
      options.config = config;
      Gateway gateway(store, options);
      const int bound = gateway.bind(host, port);
      if (bound < 0) throw Error(ErrorCode::kIo, "cannot bind " + host + ":" + std::to_string(port));
      g_gateway = &gateway;
      std::signal(SIGINT, on_signal);
      std::signal(SIGTERM, on_signal);
      std::cout << "listening on " << host << ":" << bound << std::endl;
      gateway.serve();
      g_gateway = nullptr;
    }
  } catch (const Error& e) {
    std::cerr << "texanno: " << error_code_name(e.code()) << ": " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "texanno: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
