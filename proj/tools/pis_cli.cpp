// pis: prompt compression command line.
//
//   pis compress <corpus.jsonl> [--ratio r | --model m] [--records f] [--seed s] [--out f]
//   pis train    <corpus.jsonl> --out model.bin [--config train.json] [--seed s]
//   pis evaluate <corpus.jsonl> [--ratio r | --model m] [--format table|json-lines]
//   pis latency  [--lengths 300,600,...] [--runs n]
//   pis noise    <corpus.jsonl> --words n [--lexicon words.txt] [--seed s]
//
// Exit codes: 0 success, 1 usage, 2 data error.

#include <cstdint>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "pis/pis.hpp"

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitData = 2;

struct CommonOptions {
    std::string corpus;
    std::string config;
    std::string records;
    std::string model;
    std::optional<double> ratio;
    std::optional<std::uint64_t> seed;
    std::string out;
    std::optional<std::size_t> threads;
    bool no_roulette = false;
    std::string format;
};

class Output {
public:
    explicit Output(const std::string& path) {
        if (!path.empty()) {
            file_.open(path);
            if (!file_) throw pis::Error("cannot open '" + path + "' for writing");
        }
    }
    std::ostream& stream() { return file_.is_open() ? file_ : std::cout; }

private:
    std::ofstream file_;
};

// Defaults, then --config, then flags; PIS_RECORDS fills in a missing records path.
pis::PipelineConfig resolve_config(const CommonOptions& o) {
    pis::PipelineConfig cfg;
    if (!o.config.empty()) cfg = pis::load_pipeline_config(o.config, cfg);
    if (o.ratio) {
        cfg.target_mode = pis::TargetMode::fixed;
        cfg.ratio = *o.ratio;
    }
    if (!o.model.empty()) {
        cfg.target_mode = pis::TargetMode::policy;
        cfg.model_path = o.model;
    }
    if (o.seed) cfg.seed = *o.seed;
    if (o.threads) cfg.threads = *o.threads;
    if (o.no_roulette) cfg.roulette_enabled = false;
    if (!o.records.empty()) {
        cfg.records_path = o.records;
    } else if (cfg.records_path.empty()) {
        if (const char* env = std::getenv("PIS_RECORDS"); env != nullptr) cfg.records_path = env;
    }
    if (o.format == "table") cfg.report_format = pis::ReportFormat::table;
    if (o.format == "json-lines") cfg.report_format = pis::ReportFormat::json_lines;
    pis::validate(cfg);
    return cfg;
}

struct LoadedInputs {
    std::vector<pis::CorpusEntry> corpus;
    std::optional<pis::RecordMap> records;
    std::optional<pis::QNetwork> policy;
};

LoadedInputs load_inputs(const CommonOptions& o, const pis::PipelineConfig& cfg) {
    LoadedInputs in;
    in.corpus = pis::ingest_corpus(o.corpus);
    if (!cfg.records_path.empty()) in.records = pis::load_encoder_records(cfg.records_path);
    if (cfg.target_mode == pis::TargetMode::policy) in.policy = pis::load_model(cfg.model_path);
    return in;
}

void add_pipeline_flags(CLI::App* cmd, CommonOptions& o) {
    cmd->add_option("corpus", o.corpus, "Corpus JSON Lines file")->required();
    cmd->add_option("--config", o.config, "Pipeline config JSON");
    cmd->add_option("--records", o.records, "Encoder record JSON Lines (falls back to $PIS_RECORDS)");
    cmd->add_option("--model", o.model, "Trained ratio policy; selects policy mode");
    cmd->add_option("--ratio", o.ratio, "Fixed fraction of words removed per sentence (0, 0.1, ..., 0.8)");
    cmd->add_option("--seed", o.seed, "Run seed");
    cmd->add_option("--out", o.out, "Output file (default stdout)");
    cmd->add_option("--threads", o.threads, "Worker threads over documents");
    cmd->add_flag("--no-roulette", o.no_roulette, "Disable sentence-level roulette");
}

int run_compress(const CommonOptions& o) {
    const auto cfg = resolve_config(o);
    const auto in = load_inputs(o, cfg);
    const auto ctx = pis::make_context(in.corpus, cfg, in.records ? &*in.records : nullptr,
                                       in.policy ? &*in.policy : nullptr);
    const auto docs = pis::compress_corpus(in.corpus, ctx);
    Output out(o.out);
    pis::write_compressed(out.stream(), docs);
    return 0;
}

int run_evaluate(const CommonOptions& o) {
    const auto cfg = resolve_config(o);
    const auto in = load_inputs(o, cfg);
    const auto ctx = pis::make_context(in.corpus, cfg, in.records ? &*in.records : nullptr,
                                       in.policy ? &*in.policy : nullptr);
    const auto ev = pis::evaluate(in.corpus, ctx);
    Output out(o.out);
    if (cfg.report_format == pis::ReportFormat::table) {
        pis::write_table(out.stream(), ev);
    } else {
        pis::write_json_lines(out.stream(), ev);
    }
    return 0;
}

int run_train(const CommonOptions& o) {
    pis::TrainConfig tc;
    if (!o.config.empty()) tc = pis::load_train_config(o.config);
    std::string records_path = o.records;
    if (records_path.empty()) {
        if (const char* env = std::getenv("PIS_RECORDS"); env != nullptr) records_path = env;
    }
    const auto corpus = pis::ingest_corpus(o.corpus);
    const auto docs = pis::documents_of(corpus);
    std::optional<pis::RecordMap> records;
    if (!records_path.empty()) records = pis::load_encoder_records(records_path);
    pis::Rng rng(o.seed.value_or(0));
    const auto result = pis::train(docs, records ? &*records : nullptr, tc, rng);
    pis::save_model(o.out, result.policy);
    for (std::size_t e = 0; e < result.episode_mean_reward.size(); ++e) {
        std::cout << "episode " << (e + 1) << " mean_reward " << result.episode_mean_reward[e] << '\n';
    }
    std::cout << "gradient_steps " << result.gradient_steps << '\n';
    return 0;
}

int run_latency(const std::vector<std::size_t>& lengths, std::size_t runs, std::uint64_t seed,
                const std::string& out_path) {
    pis::PipelineConfig cfg;
    cfg.seed = seed;
    // 2x, 3x and 5x operating points.
    const std::vector<double> ratios = {0.5, 0.7, 0.8};
    const auto rows = pis::latency_probe(lengths, ratios, cfg, {runs, 10});
    Output out(out_path);
    auto& os = out.stream();
    char line[128];
    std::snprintf(line, sizeof line, "%-8s %12s %12s %12s\n", "tokens", "2x (s)", "3x (s)", "5x (s)");
    os << line;
    for (std::size_t i = 0; i + ratios.size() <= rows.size(); i += ratios.size()) {
        std::snprintf(line, sizeof line, "%-8zu %12.6f %12.6f %12.6f\n", rows[i].length, rows[i].seconds,
                      rows[i + 1].seconds, rows[i + 2].seconds);
        os << line;
    }
    return 0;
}

int run_noise(const CommonOptions& o, std::size_t words, const std::string& lexicon_path) {
    const auto corpus = pis::ingest_corpus(o.corpus);
    std::vector<std::string> lexicon;
    if (!lexicon_path.empty()) {
        std::ifstream in(lexicon_path);
        if (!in) throw pis::ParseError(0, "cannot open lexicon '" + lexicon_path + "'");
        for (std::string w; in >> w;) lexicon.push_back(w);
    } else {
        std::set<std::string> vocab;
        for (const auto& e : corpus) {
            for (const auto& s : e.doc.sentences) {
                for (const auto& t : s.tokens) {
                    if (t.is_word()) vocab.insert(t.text);
                }
            }
        }
        lexicon.assign(vocab.begin(), vocab.end());
    }
    const auto noisy = pis::for_each_document(corpus, o.seed.value_or(0), 1, [&](std::size_t i, pis::Rng& rng) {
        nlohmann::json j{{"id", corpus[i].doc.id}, {"text", pis::inject_noise(corpus[i].doc.text, words, lexicon, rng)}};
        if (corpus[i].reference) j["reference"] = *corpus[i].reference;
        if (corpus[i].answer) j["answer"] = *corpus[i].answer;
        return j.dump();
    });
    Output out(o.out);
    for (const auto& line : noisy) out.stream() << line << '\n';
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Prompt importance sampling: token- and sentence-level prompt compression"};
    app.require_subcommand(1);

    CommonOptions compress_opts, evaluate_opts, train_opts, noise_opts;

    auto* compress = app.add_subcommand("compress", "Compress every document of a corpus");
    add_pipeline_flags(compress, compress_opts);

    auto* evaluate = app.add_subcommand("evaluate", "Compress and score against references");
    add_pipeline_flags(evaluate, evaluate_opts);
    evaluate->add_option("--format", evaluate_opts.format, "Report format")
        ->check(CLI::IsMember({"table", "json-lines"}));

    auto* train = app.add_subcommand("train", "Train the compression-ratio policy");
    train->add_option("corpus", train_opts.corpus, "Corpus JSON Lines file")->required();
    train->add_option("--config", train_opts.config, "Training config JSON");
    train->add_option("--records", train_opts.records, "Encoder record JSON Lines (falls back to $PIS_RECORDS)");
    train->add_option("--seed", train_opts.seed, "Training seed");
    train->add_option("--out", train_opts.out, "Model output path")->required();

    std::vector<std::size_t> lengths = {300, 600, 900, 1200, 1500};
    std::size_t runs = 5;
    std::uint64_t latency_seed = 0;
    std::string latency_out;
    auto* latency = app.add_subcommand("latency", "Time compression on synthetic inputs");
    latency->add_option("--lengths", lengths, "Input lengths in word tokens")->delimiter(',');
    latency->add_option("--runs", runs, "Timed runs per cell (median reported)");
    latency->add_option("--seed", latency_seed, "Seed for the synthetic inputs");
    latency->add_option("--out", latency_out, "Output file (default stdout)");

    std::size_t noise_words = 0;
    std::string lexicon;
    auto* noise = app.add_subcommand("noise", "Insert random words into every document");
    noise->add_option("corpus", noise_opts.corpus, "Corpus JSON Lines file")->required();
    noise->add_option("--words", noise_words, "Words to insert per document")->required();
    noise->add_option("--lexicon", lexicon, "Whitespace-separated word list (default: corpus vocabulary)");
    noise->add_option("--seed", noise_opts.seed, "Seed");
    noise->add_option("--out", noise_opts.out, "Output file (default stdout)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitUsage;
    }

    try {
        if (*compress) return run_compress(compress_opts);
        if (*evaluate) return run_evaluate(evaluate_opts);
        if (*train) return run_train(train_opts);
        if (*latency) return run_latency(lengths, runs, latency_seed, latency_out);
        if (*noise) return run_noise(noise_opts, noise_words, lexicon);
    } catch (const pis::Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitData;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitData;
    }
    return kExitUsage;
}
