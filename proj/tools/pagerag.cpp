/*
 * Copyright 2026 The pagerag Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

// pagerag command line: ingest, index, query, eval, subset, serve.

#include <atomic>
#include <chrono>
#include <cstdlib>
#include <iostream>
#include <thread>

#include <CLI11.hpp>
#include <json.hpp>

#include "pagerag/config.hpp"
#include "pagerag/corpus.hpp"
#include "pagerag/eval.hpp"
#include "pagerag/pipeline.hpp"
#include "pagerag/prompts.hpp"
#include "pagerag/providers.hpp"
#include "pagerag/service.hpp"
#include "pagerag/trace.hpp"
#include "pagerag/util.hpp"
#include "pagerag/vector_index.hpp"

namespace fs = std::filesystem;
using namespace pagerag;

namespace {

struct Common {
    std::string config_path;
    std::string mock_script;
    bool test_mode = false;

    RunEnvironment env() const {
        const char* v = std::getenv("PAGERAG_TEST_MODE");
        const bool from_env = v && std::string(v) != "" && std::string(v) != "0";
        return RunEnvironment(test_mode || from_env);
    }

    AppConfig app_config() const {
        return config_path.empty() ? default_app_config() : load_app_config(config_path);
    }

    /// Mock script wins over HTTP endpoints when given.
    providers::ProviderSet providers(const AppConfig& cfg) const {
        if (mock_script.empty()) return make_http_providers(cfg);
        auto script = std::make_shared<const providers::MockScript>(providers::MockScript::load(mock_script));
        providers::ProviderSet set;
        set.set_all(std::make_shared<providers::MockProvider>(script));
        return set;
    }
};

void add_common(CLI::App* cmd, Common& c, bool with_config = true) {
    if (with_config) cmd->add_option("--config", c.config_path, "pipeline TOML file")->check(CLI::ExistingFile);
    cmd->add_option("--mock-script", c.mock_script, "answer every provider call from a scripted mock file")
        ->check(CLI::ExistingFile);
    cmd->add_flag("--test-mode", c.test_mode, "fixed clock and deterministic ids (also PAGERAG_TEST_MODE=1)");
}

PromptSet load_prompts(const AppConfig& cfg) {
    if (cfg.prompts_dir.empty()) throw ConfigError("no prompts directory configured ([prompts] dir)");
    return PromptSet::load(cfg.prompts_dir);
}

nlohmann::ordered_json candidates_json(const std::vector<index::RetrievalCandidate>& hits,
                                       const corpus::Manifest* manifest) {
    auto out = nlohmann::ordered_json::array();
    for (const auto& h : hits) {
        nlohmann::ordered_json row = {{"rank", h.rank}, {"page_id", h.page_id}, {"distance", h.distance}};
        if (manifest) {
            if (const auto* p = manifest->find(h.page_id)) {
                row["doc_id"] = p->doc_id;
                row["page_index"] = p->page_index;
            }
        }
        out.push_back(row);
    }
    return out;
}

// ---------------------------------------------------------------------------

int run_ingest(const std::string& images, const std::string& meta, const std::string& canvas, const std::string& out,
               std::string pages_dir, unsigned jobs, const Common& common) {
    corpus::IngestOptions opt;
    opt.images_dir = images;
    opt.meta_file = meta;
    opt.canvas = corpus::parse_canvas(canvas);
    opt.pages_out_dir = pages_dir.empty() ? fs::path(out).parent_path() / "pages" : fs::path(pages_dir);
    opt.jobs = std::max(1u, jobs);
    opt.created_at = common.env().now_iso8601();
    const auto manifest = corpus::ingest_corpus(opt);
    corpus::save_manifest(manifest, out);
    std::cout << "pages " << manifest.stats.page_count << ", docs " << manifest.stats.doc_count
              << ", avg pages/doc " << manifest.stats.avg_pages_per_doc.to_fixed(2) << "\n";
    return 0;
}

int run_index_build(const std::string& manifest_path, const std::string& provider_url, const std::string& out,
                    unsigned jobs, const Common& common) {
    auto cfg = common.app_config();
    if (!provider_url.empty()) cfg.endpoints[providers::Role::Embedder].url = provider_url;
    const auto set = common.providers(cfg);
    auto& embedder = set.get(providers::Role::Embedder);
    const auto manifest = corpus::load_manifest(manifest_path);

    std::vector<std::pair<std::int64_t, index::PooledVector>> pooled(manifest.pages.size());
    std::atomic<std::size_t> next{0};
    std::atomic<std::size_t> done{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    auto worker = [&] {
        for (std::size_t i = next++; i < manifest.pages.size(); i = next++) {
            const auto& page = manifest.pages[i];
            try {
                auto resp = embedder.invoke(pipeline::embed_page_request(page.image_uri));
                if (!resp.embedding) {
                    throw providers::ProviderError(providers::ProviderErrc::ProtocolError,
                                                   "no embedding for page " + std::to_string(page.page_id));
                }
                pooled[i] = {page.page_id, index::mean_pool(*resp.embedding, index::VectorSource::Page)};
                ++done;
            } catch (...) {
                std::lock_guard lock(error_mutex);
                if (!error) error = std::current_exception();
                next = manifest.pages.size();
            }
        }
    };
    {
        std::vector<std::jthread> pool;
        for (unsigned t = 1; t < std::max(1u, jobs); ++t) pool.emplace_back(worker);
        worker();
    }
    if (error) std::rethrow_exception(error);
    const auto idx = index::build_index(pooled);
    index::persist_index(idx, out);
    std::cout << "indexed " << idx.count() << " pages, dim " << idx.dim() << "\n";
    return 0;
}

int run_index_search(const std::string& index_path, const std::string& manifest_path, const std::string& query,
                     const std::string& provider_url, int k, const Common& common) {
    auto cfg = common.app_config();
    if (!provider_url.empty()) cfg.endpoints[providers::Role::Embedder].url = provider_url;
    const auto set = common.providers(cfg);
    const auto idx = index::load_index(index_path);
    std::optional<corpus::Manifest> manifest;
    if (!manifest_path.empty()) manifest = corpus::load_manifest(manifest_path);
    const auto resp = set.get(providers::Role::Embedder).invoke(pipeline::embed_query_request(query));
    if (!resp.embedding) throw std::runtime_error("embedder returned no embedding");
    const auto hits = idx.search(index::mean_pool(*resp.embedding, index::VectorSource::Query), k);
    std::cout << candidates_json(hits, manifest ? &*manifest : nullptr).dump(2) << "\n";
    return 0;
}

int run_query(const std::string& index_path, const std::string& manifest_path, const std::string& query,
              const std::string& trace_out, const std::string& ablate, const std::string& traces_dir,
              const Common& common) {
    auto cfg = common.app_config();
    if (!ablate.empty()) cfg.pipeline.ablations = parse_ablations(ablate);
    if (!traces_dir.empty()) cfg.traces_dir = traces_dir;
    const auto idx = index::load_index(index_path);
    const auto manifest = corpus::load_manifest(manifest_path);
    const auto set = common.providers(cfg);
    const auto prompts = load_prompts(cfg);
    const pipeline::PipelineDeps deps{idx, manifest, set, prompts, common.env()};
    trace::TraceStore store(cfg.traces_dir);

    auto persist = [&](const trace::ProcessTrace& t) {
        store.save(t);
        if (!trace_out.empty()) write_file_atomic(trace_out, trace::serialize_trace(t));
    };
    try {
        auto result = pipeline::run_pipeline(query, cfg.pipeline, deps);
        persist(result.trace);
        nlohmann::ordered_json units = nlohmann::ordered_json::array();
        for (const auto& u : result.units) {
            units.push_back({{"subq_index", u.subq_index},
                             {"subquestion", u.subq_text},
                             {"mode", pipeline::to_string(u.mode)}});
        }
        nlohmann::ordered_json cites = nlohmann::ordered_json::array();
        for (const auto& c : result.answer.citations) {
            cites.push_back({{"doc_id", c.doc_id}, {"page_index", c.page_index}, {"page_id", c.page_id},
                             {"image_uri", c.image_uri}});
        }
        nlohmann::ordered_json out = {{"answer", result.answer.text},
                                      {"citations", cites},
                                      {"subquestions", units},
                                      {"trace_id", result.answer.trace_id}};
        std::cout << out.dump(2) << "\n";
        return 0;
    } catch (const pipeline::PipelineFailure& f) {
        persist(f.trace());
        std::cerr << "query failed: " << f.what() << " (trace " << f.trace().trace_id() << ")\n";
        return 1;
    }
}

std::vector<nlohmann::json> load_dataset(const std::string& dataset, eval::Subset subset) {
    const fs::path p(dataset);
    return eval::load_jsonl(fs::is_directory(p) ? eval::locate_subset_file(p, subset) : p);
}

int run_subset(const std::string& dataset, const std::string& mode_name, const std::vector<std::string>& subsets) {
    const auto mode = mode_name == "word" ? eval::MatchMode::WordBoundary : eval::MatchMode::Substring;
    nlohmann::ordered_json out = nlohmann::ordered_json::object();
    for (const auto& name : subsets) {
        const auto s = eval::parse_subset(name);
        const auto start = std::chrono::steady_clock::now();
        const auto records = load_dataset(dataset, s);
        const auto res = eval::filter_ophthalmology(records, eval::default_keywords(), mode);
        for (const auto& w : res.warnings) std::cerr << "warning: " << name << ": " << w << "\n";
        const auto ms =
            std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - start).count();
        out[name] = {{"records", records.size()}, {"kept", res.kept.size()}, {"elapsed_ms", ms}};
    }
    std::cout << out.dump(2) << "\n";
    return 0;
}

int run_eval(const std::string& dataset, const std::string& subset_name, const std::string& ablate,
             const std::string& report, const std::string& grader_url, const std::string& index_path,
             const std::string& manifest_path, const std::string& mode_name, std::size_t limit, std::size_t jobs,
             const std::string& traces_dir, const Common& common) {
    auto cfg = common.app_config();
    if (!grader_url.empty()) cfg.endpoints[providers::Role::Grader].url = grader_url;
    if (!traces_dir.empty()) cfg.traces_dir = traces_dir;
    const auto subset_id = eval::parse_subset(subset_name);
    const auto records = load_dataset(dataset, subset_id);
    const auto mode = mode_name == "word" ? eval::MatchMode::WordBoundary : eval::MatchMode::Substring;
    const auto filtered = eval::filter_ophthalmology(records, eval::default_keywords(), mode);
    for (const auto& w : filtered.warnings) std::cerr << "warning: " << w << "\n";

    std::vector<eval::EvalExample> examples;
    for (auto i : filtered.kept) {
        examples.push_back(eval::parse_example(records[i], subset_id, i + 1));
        if (limit && examples.size() >= limit) break;
    }

    std::vector<eval::AblationConfig> configs;
    if (ablate.empty()) {
        configs = eval::standard_ablation_configs(cfg.pipeline);
    } else {
        for (const auto& item : CLI::detail::split(ablate, ';')) {
            PipelineConfig c = cfg.pipeline;
            c.ablations = parse_ablations(item);
            configs.push_back({ablation_label(c.ablations), c});
        }
    }

    const auto idx = index::load_index(index_path);
    const auto manifest = corpus::load_manifest(manifest_path);
    const auto set = common.providers(cfg);
    const auto prompts = load_prompts(cfg);
    const pipeline::PipelineDeps deps{idx, manifest, set, prompts, common.env()};
    trace::TraceStore store(cfg.traces_dir);

    std::string doc = "# Evaluation report\n\nSubset: " + subset_name + " (" + std::to_string(examples.size()) +
                      " of " + std::to_string(records.size()) + " records kept by the keyword filter)\n\n";
    int rc = 0;
    eval::MatrixResult result;
    try {
        result = eval::run_ablation_matrix(examples, configs, deps, store, {jobs, 0.10});
    } catch (const eval::MatrixFailure& f) {
        std::cerr << f.what() << "\n";
        result = f.partial();
        doc += "**Run failed:** " + std::string(f.what()) + "\n\n";
        rc = 1;
    }
    doc += result.table + "\n";
    for (const auto& r : result.reports) {
        doc += "- " + r.config_label + ": n=" + std::to_string(r.n_examples) + ", ungradable=" +
               std::to_string(r.ungradable) + ", failed=" + std::to_string(r.failed) + "\n";
    }
    if (report.empty()) {
        std::cout << doc;
    } else {
        write_file_atomic(report, doc);
        std::cout << result.table;
    }
    return rc;
}

int run_serve(const std::string& index_path, const std::string& manifest_path, const std::string& listen,
              const std::string& ui_dir, const Common& common) {
    auto cfg = common.app_config();
    auto prompts = load_prompts(cfg);
    auto set = common.providers(cfg);
    service::Engine engine(index::load_index(index_path), corpus::load_manifest(manifest_path), std::move(set),
                           std::move(prompts), cfg, common.env());
    std::optional<fs::path> ui;
    if (!ui_dir.empty()) ui = ui_dir;
    std::cerr << "listening on " << listen << "\n";
    service::serve(engine, listen, ui);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"pagerag: page-image retrieval and grounded answering over clinical guideline corpora"};
    app.require_subcommand(1);
    Common common;
    int rc = 0;

    // ingest
    std::string images, meta, canvas = "5390x7940", out, pages_dir;
    unsigned jobs = std::max(1u, std::thread::hardware_concurrency());
    auto* ingest = app.add_subcommand("ingest", "normalize page images and write the corpus manifest");
    ingest->add_option("--images", images, "directory of source page images")->required();
    ingest->add_option("--meta", meta, "JSON metadata listing every page")->required()->check(CLI::ExistingFile);
    ingest->add_option("--canvas", canvas, "target canvas WxH")->capture_default_str();
    ingest->add_option("--out", out, "manifest output path")->required();
    ingest->add_option("--pages-dir", pages_dir, "normalized page output directory (default: <out dir>/pages)");
    ingest->add_option("--jobs", jobs, "worker threads");
    add_common(ingest, common, false);

    // index build | search
    auto* idx = app.add_subcommand("index", "build or query the page vector index");
    idx->require_subcommand(1);
    std::string manifest_path, provider_url, index_path, query_text;
    int k = 5;
    auto* build = idx->add_subcommand("build", "embed every manifest page and persist the index");
    build->add_option("--manifest", manifest_path)->required()->check(CLI::ExistingFile);
    build->add_option("--provider", provider_url, "embedding endpoint URL");
    build->add_option("--out", out)->required();
    build->add_option("--jobs", jobs, "concurrent embedding requests");
    add_common(build, common);
    auto* search = idx->add_subcommand("search", "embed a query and print the nearest pages");
    search->add_option("--index", index_path)->required()->check(CLI::ExistingFile);
    search->add_option("--manifest", manifest_path, "annotate hits with doc_id/page_index")->check(CLI::ExistingFile);
    search->add_option("--query", query_text)->required();
    search->add_option("--provider", provider_url, "embedding endpoint URL");
    search->add_option("-k", k, "number of neighbours")->check(CLI::PositiveNumber);
    add_common(search, common);

    // query
    std::string trace_out, ablate, traces_dir;
    auto* query = app.add_subcommand("query", "answer one question and write its trace");
    query->add_option("--index", index_path)->required()->check(CLI::ExistingFile);
    query->add_option("--manifest", manifest_path)->required()->check(CLI::ExistingFile);
    query->add_option("--trace-out", trace_out, "also write the trace to this file");
    query->add_option("--traces-dir", traces_dir, "trace store directory (overrides the config)");
    query->add_option("--ablate", ablate, "comma list of no_rerank,no_query_rewrite,no_router");
    query->add_option("question", query_text)->required();
    add_common(query, common);

    // eval
    std::string dataset, subset = "hard", report, grader_url, match_mode = "substring";
    std::size_t limit = 0, eval_jobs = 1;
    auto* ev = app.add_subcommand("eval", "run the rubric-graded ablation matrix");
    ev->add_option("--dataset", dataset, "JSONL file or directory of benchmark files")->required();
    ev->add_option("--subset", subset)->check(CLI::IsMember({"main", "consensus", "hard"}))->capture_default_str();
    ev->add_option("--ablate", ablate, "';'-separated configs, each a comma list or 'full' (default: all four rows)");
    ev->add_option("--report", report, "markdown report path");
    ev->add_option("--grader", grader_url, "grader endpoint URL");
    ev->add_option("--index", index_path)->required()->check(CLI::ExistingFile);
    ev->add_option("--manifest", manifest_path)->required()->check(CLI::ExistingFile);
    ev->add_option("--match", match_mode)->check(CLI::IsMember({"substring", "word"}))->capture_default_str();
    ev->add_option("--limit", limit, "evaluate at most this many filtered examples");
    ev->add_option("--jobs", eval_jobs, "examples evaluated concurrently");
    ev->add_option("--traces-dir", traces_dir, "trace store directory (overrides the config)");
    add_common(ev, common);

    // subset
    std::vector<std::string> subsets = {"main", "consensus", "hard"};
    auto* sub = app.add_subcommand("subset", "count keyword-filtered examples per benchmark file");
    sub->add_option("--dataset", dataset, "directory of benchmark files")->required();
    sub->add_option("--subset", subsets)->check(CLI::IsMember({"main", "consensus", "hard"}));
    sub->add_option("--match", match_mode)->check(CLI::IsMember({"substring", "word"}))->capture_default_str();

    // serve
    std::string listen = "127.0.0.1:8080", ui_dir;
    auto* serve = app.add_subcommand("serve", "run the HTTP service");
    serve->add_option("--index", index_path)->required()->check(CLI::ExistingFile);
    serve->add_option("--manifest", manifest_path)->required()->check(CLI::ExistingFile);
    serve->add_option("--listen", listen)->capture_default_str();
    serve->add_option("--ui", ui_dir, "static UI assets served under /ui");
    add_common(serve, common);

    CLI11_PARSE(app, argc, argv);

    try {
        if (*ingest) {
            rc = run_ingest(images, meta, canvas, out, pages_dir, jobs, common);
        } else if (*build) {
            rc = run_index_build(manifest_path, provider_url, out, jobs, common);
        } else if (*search) {
            rc = run_index_search(index_path, manifest_path, query_text, provider_url, k, common);
        } else if (*query) {
            rc = run_query(index_path, manifest_path, query_text, trace_out, ablate, traces_dir, common);
        } else if (*ev) {
            rc = run_eval(dataset, subset, ablate, report, grader_url, index_path, manifest_path, match_mode, limit,
                          eval_jobs, traces_dir, common);
        } else if (*sub) {
            rc = run_subset(dataset, match_mode, subsets);
        } else if (*serve) {
            rc = run_serve(index_path, manifest_path, listen, ui_dir, common);
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return rc;
}
