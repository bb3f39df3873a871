// Operator entry point: wires config, pipelines, search, QC, and mixing into
// batch subcommands. Every output file is JSONL with a header line carrying
// the config digest, seed, and tool version.

#include <atomic>
#include <condition_variable>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <thread>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "mics/curriculum.hpp"
#include "mics/digest.hpp"
#include "mics/gateway.hpp"
#include "mics/jsonl.hpp"
#include "mics/pipeline.hpp"
#include "mics/qc.hpp"
#include "mics/search.hpp"
#include "mics/types.hpp"

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 1;
constexpr int kExitPartialFailure = 2;
constexpr int kExitIo = 3;

struct RunConfig {
    mics::gw::GatewayConfig gateway;
    mics::search::SearchConfig search;
    mics::pipeline::PipelineConfig pipeline;
    std::map<std::string, std::string> corpora;  // name -> jsonl path (mix)
    std::vector<mics::curriculum::StagePlan> stages;
    std::uint64_t seed = 0;
    int workers = 4;
    int tolerance = 0;
    std::string digest;  // md5 of the parsed config
};

RunConfig load_config(const std::string& path) {
    RunConfig rc;
    json j = json::object();
    if (!path.empty()) {
        std::ifstream in(path);
        if (!in) throw std::runtime_error("cannot open config: " + path);
        in >> j;
    }
    rc.gateway = mics::gw::GatewayConfig::from_json(j.value("gateway", json::object()));
    if (j.contains("search")) {
        const auto& s = j.at("search");
        rc.search.max_depth = s.value("max_depth", 4);
        rc.search.max_research_attempts = s.value("max_research_attempts", 2);
    }
    rc.search.mentors = rc.gateway.mentors;
    rc.search.interns = rc.gateway.interns;
    rc.search.judge = rc.gateway.judge;
    if (j.contains("pipeline")) {
        const auto& p = j.at("pipeline");
        rc.pipeline.token_thresholds =
            p.value("token_thresholds", rc.pipeline.token_thresholds);
        rc.pipeline.pairs_per_level = p.value("pairs_per_level", rc.pipeline.pairs_per_level);
        rc.pipeline.ambiguity_phrases =
            p.value("ambiguity_phrases", rc.pipeline.ambiguity_phrases);
        rc.pipeline.min_resolution = p.value("min_resolution", rc.pipeline.min_resolution);
        rc.pipeline.max_group_images = p.value("max_group_images", rc.pipeline.max_group_images);
    }
    if (j.contains("corpora"))
        rc.corpora = j.at("corpora").get<std::map<std::string, std::string>>();
    if (j.contains("stages"))
        rc.stages = j.at("stages").get<std::vector<mics::curriculum::StagePlan>>();
    rc.seed = j.value("seed", std::uint64_t{0});
    rc.workers = j.value("workers", 4);
    rc.tolerance = j.value("tolerance", 0);
    rc.digest = mics::md5_hex(j.dump());
    return rc;
}

std::shared_ptr<mics::gw::Backend> make_backend(const mics::gw::GatewayConfig& g,
                                                const std::string& replay_cache) {
    std::shared_ptr<mics::gw::Backend> base =
        std::make_shared<mics::gw::HttpChatBackend>(g.endpoints, g.retry);
    std::string mode = g.cache_mode;
    std::string path = g.cache_path;
    if (!replay_cache.empty()) {
        mode = "replay";
        path = replay_cache;
    }
    if (mode == "record") return mics::gw::with_cache(base, path, mics::gw::CacheMode::Record);
    if (mode == "replay") return mics::gw::with_cache(base, path, mics::gw::CacheMode::Replay);
    return base;
}

mics::FileHeader make_header(const RunConfig& rc) {
    return mics::FileHeader{rc.digest, rc.seed, mics::kToolVersion};
}

// In-order appender for a parallel worker pool: results are written in input
// order regardless of completion order, so reruns are byte-identical.
class OrderedAppender {
public:
    explicit OrderedAppender(mics::JsonlWriter& writer) : writer_(writer) {}

    void emit(std::size_t index, json record) {
        std::lock_guard<std::mutex> lock(mu_);
        pending_[index] = std::move(record);
        while (true) {
            auto it = pending_.find(next_);
            if (it == pending_.end()) break;
            writer_.append(it->second);
            pending_.erase(it);
            ++next_;
        }
    }

    void skip(std::size_t index) { emit(index, json()); }

private:
    mics::JsonlWriter& writer_;
    std::mutex mu_;
    std::map<std::size_t, json> pending_;
    std::size_t next_ = 0;
};

int cmd_search(const RunConfig& rc, const std::string& input, const std::string& output,
               const std::string& replay_cache) {
    auto in = mics::read_jsonl(input);
    if (in.records.empty() && !fs::exists(input)) {
        spdlog::error("input not found: {}", input);
        return kExitIo;
    }

    std::set<std::string> done_ids;
    for (const auto& rec : mics::read_jsonl(output).records) {
        if (rec.contains("item_id")) done_ids.insert(rec.at("item_id").get<std::string>());
    }

    std::vector<mics::VqaItem> items;
    for (const auto& rec : in.records) {
        mics::VqaItem item = rec.get<mics::VqaItem>();
        if (!done_ids.count(item.item_id)) items.push_back(std::move(item));
    }

    auto backend = make_backend(rc.gateway, replay_cache);
    mics::gw::PromptTemplates templates =
        rc.gateway.prompt_dir.empty() ? mics::gw::PromptTemplates::defaults()
                                      : mics::gw::PromptTemplates::load_dir(rc.gateway.prompt_dir);
    mics::gw::ModelGateway gateway(backend, templates, rc.gateway.max_tokens,
                                   rc.gateway.inflight_limit);

    mics::JsonlWriter writer(output, make_header(rc));
    OrderedAppender appender(writer);

    std::atomic<std::size_t> cursor{0};
    std::atomic<int> completed{0}, failed{0}, errored{0};
    std::atomic<long> depth_sum{0};
    std::mutex histo_mu;
    std::map<std::string, int> stop_histogram;

    auto work = [&]() {
        while (true) {
            const std::size_t i = cursor.fetch_add(1);
            if (i >= items.size()) return;
            try {
                mics::SearchTrace trace = mics::search::mics_search(gateway, items[i], rc.search);
                depth_sum += static_cast<long>(trace.iterations.size());
                {
                    std::lock_guard<std::mutex> lock(histo_mu);
                    ++stop_histogram[mics::to_string(trace.stop_reason)];
                }
                ++completed;
                appender.emit(i, json(trace));
            } catch (const mics::search::SearchFailed& e) {
                ++failed;
                {
                    std::lock_guard<std::mutex> lock(histo_mu);
                    ++stop_histogram[mics::to_string(mics::StopReason::AllZeroFailure)];
                }
                appender.emit(i, json(e.trace));
            } catch (const std::exception& e) {
                spdlog::error("item {} errored: {}", items[i].item_id, e.what());
                ++errored;
                appender.emit(i, json{{"item_id", items[i].item_id}, {"error", e.what()}});
            }
        }
    };

    std::vector<std::thread> pool;
    const int width = std::max(1, rc.workers);
    for (int t = 0; t < width; ++t) pool.emplace_back(work);
    for (auto& t : pool) t.join();

    json summary{{"items", items.size()},
                 {"skipped_already_done", done_ids.size()},
                 {"completed", completed.load()},
                 {"failed", failed.load()},
                 {"errored", errored.load()},
                 {"mean_depth", completed > 0 ? static_cast<double>(depth_sum) / completed : 0.0},
                 {"stop_reasons", stop_histogram}};
    std::cout << summary.dump() << "\n";

    if (errored > 0) return kExitIo;
    if (failed > rc.tolerance) return kExitPartialFailure;
    return kExitOk;
}

int cmd_qc(const RunConfig& rc, const std::string& input, const std::string& outdir) {
    auto in = mics::read_jsonl(input);
    fs::create_directories(outdir);
    mics::JsonlWriter accepted(outdir + "/accepted.jsonl", make_header(rc));
    mics::JsonlWriter flagged(outdir + "/flagged.jsonl", make_header(rc));

    std::map<std::string, int> class_counts;
    std::map<std::string, int> flag_counts;
    int accepted_n = 0, flagged_n = 0, skipped = 0;
    for (const auto& rec : in.records) {
        mics::SearchTrace trace;
        try {
            trace = rec.get<mics::SearchTrace>();
        } catch (const std::exception&) {
            ++skipped;
            continue;
        }
        if (!trace.final_path) {
            ++skipped;
            continue;
        }
        auto verdict = mics::qc::qc_filter(trace);
        ++class_counts[mics::qc::to_string(verdict.trend)];
        json out = rec;
        out["trend"] = mics::qc::to_string(verdict.trend);
        if (verdict.accepted) {
            ++accepted_n;
            accepted.append(out);
        } else {
            ++flagged_n;
            ++flag_counts[mics::qc::to_string(verdict.reason)];
            out["flag_reason"] = mics::qc::to_string(verdict.reason);
            flagged.append(out);
        }
    }
    json summary{{"in", in.records.size()}, {"accepted", accepted_n}, {"flagged", flagged_n},
                 {"skipped_no_path", skipped}, {"trend_counts", class_counts},
                 {"flag_reasons", flag_counts}};
    std::cout << summary.dump() << "\n";
    return kExitOk;
}

int cmd_genqa(const RunConfig& rc, const std::string& input, const std::string& output,
              const std::string& replay_cache) {
    auto in = mics::read_jsonl(input);
    auto backend = make_backend(rc.gateway, replay_cache);
    mics::JsonlWriter writer(output, make_header(rc));

    int emitted = 0, invalid = 0, incomplete = 0;
    mics::pipeline::QaGenStats totals;
    for (const auto& rec : in.records) {
        mics::CaseRecord c = rec.get<mics::CaseRecord>();
        auto report = mics::validate_case(c);
        if (!report.valid) {
            ++invalid;
            continue;
        }
        if (report.incomplete) {
            ++incomplete;
            continue;
        }
        const int level =
            mics::pipeline::bucket_case(c, mics::pipeline::whitespace_token_count, rc.pipeline);
        mics::pipeline::QaGenStats stats;
        auto pairs = mics::pipeline::generate_qa(c, level, *backend, rc.pipeline, &stats);
        totals.parsed += stats.parsed;
        totals.dropped_unparseable += stats.dropped_unparseable;
        totals.dropped_ambiguous += stats.dropped_ambiguous;
        totals.dropped_bad_label += stats.dropped_bad_label;
        for (const auto& q : pairs) {
            json out = q;
            out["case_id"] = c.case_id;
            writer.append(out);
            ++emitted;
        }
    }
    json summary{{"cases_in", in.records.size()}, {"cases_invalid", invalid},
                 {"cases_incomplete", incomplete}, {"qa_emitted", emitted},
                 {"dropped_unparseable", totals.dropped_unparseable},
                 {"dropped_ambiguous", totals.dropped_ambiguous},
                 {"dropped_bad_label", totals.dropped_bad_label}};
    std::cout << summary.dump() << "\n";
    return kExitOk;
}

int cmd_align(const RunConfig& rc, const std::string& input, const std::string& output) {
    auto in = mics::read_jsonl(input);
    mics::JsonlWriter writer(output, make_header(rc));

    int units = 0;
    mics::pipeline::AlignmentStats totals;
    for (const auto& rec : in.records) {
        mics::CaseRecord c = rec.get<mics::CaseRecord>();
        mics::pipeline::AlignmentStats stats;
        auto out_units = mics::pipeline::build_alignment_units(c, rc.pipeline, &stats);
        totals.dedup_dropped += stats.dedup_dropped;
        totals.low_res_dropped += stats.low_res_dropped;
        totals.oversize_groups_dropped += stats.oversize_groups_dropped;
        for (const auto& u : out_units) {
            json out = u;
            out["case_id"] = c.case_id;
            writer.append(out);
            ++units;
        }
    }
    json summary{{"cases_in", in.records.size()}, {"units_emitted", units},
                 {"dedup_dropped", totals.dedup_dropped},
                 {"low_res_dropped", totals.low_res_dropped},
                 {"oversize_groups_dropped", totals.oversize_groups_dropped}};
    std::cout << summary.dump() << "\n";
    return kExitOk;
}

int cmd_scenarios(const RunConfig& rc, const std::string& input, const std::string& output,
                  const std::string& scenario_arg, const std::string& replay_cache) {
    auto in = mics::read_jsonl(input);
    auto backend = make_backend(rc.gateway, replay_cache);
    mics::JsonlWriter writer(output, make_header(rc));

    std::vector<mics::Scenario> scenarios;
    if (scenario_arg == "all") {
        scenarios = {mics::Scenario::PatientToDoctor, mics::Scenario::DoctorToDoctor,
                     mics::Scenario::InternToSenior};
    } else {
        scenarios = {mics::scenario_from_string(scenario_arg)};
    }

    int emitted = 0;
    mics::pipeline::ScenarioStats totals;
    for (const auto& rec : in.records) {
        mics::CaseRecord c = rec.get<mics::CaseRecord>();
        for (auto s : scenarios) {
            mics::pipeline::ScenarioStats stats;
            auto items = mics::pipeline::generate_scenario_vqa(c, s, *backend, rc.pipeline, &stats);
            totals.parsed += stats.parsed;
            totals.dropped_unparseable += stats.dropped_unparseable;
            totals.dropped_not_question += stats.dropped_not_question;
            totals.dropped_yes_no += stats.dropped_yes_no;
            for (const auto& item : items) {
                writer.append(json(item));
                ++emitted;
            }
        }
    }
    json summary{{"cases_in", in.records.size()}, {"items_emitted", emitted},
                 {"dropped_unparseable", totals.dropped_unparseable},
                 {"dropped_not_question", totals.dropped_not_question},
                 {"dropped_yes_no", totals.dropped_yes_no}};
    std::cout << summary.dump() << "\n";
    return kExitOk;
}

int cmd_mix(const RunConfig& rc, const std::string& outdir, bool export_records) {
    if (rc.corpora.empty()) {
        spdlog::error("mix requires a 'corpora' map in the config");
        return kExitConfig;
    }
    auto registry = mics::curriculum::CorpusRegistry::from_files(rc.corpora);
    auto plans = rc.stages.empty() ? mics::curriculum::default_stage_plans(rc.seed) : rc.stages;
    fs::create_directories(outdir);

    for (auto plan : plans) {
        if (plan.seed == 0) plan.seed = rc.seed;
        auto manifest = mics::curriculum::build_manifest(plan, registry);
        auto report = mics::curriculum::validate_manifest(manifest, registry, &plan);
        if (!report.valid) {
            for (const auto& f : report.failures) spdlog::error("stage {}: {}", plan.stage, f);
            return kExitPartialFailure;
        }

        const std::string path = outdir + "/manifest-stage" + std::to_string(plan.stage) + ".jsonl";
        std::remove(path.c_str());  // manifests are regenerated whole, not resumed
        mics::JsonlWriter writer(path, make_header(rc));
        for (const auto& e : manifest.entries)
            writer.append(json{{"corpus", e.corpus}, {"record_id", e.record_id}});

        std::int64_t total = 0;
        for (const auto& [name, count] : manifest.counts) total += count;
        json summary{{"stage", plan.stage}, {"total", total}, {"counts", manifest.counts},
                     {"oversampled", manifest.oversampled},
                     {"duplicate_rate", report.duplicate_rate}};
        std::cout << summary.dump() << "\n";

        if (export_records) {
            // materialize payloads for external trainers
            std::map<std::string, std::map<std::string, json>> payloads;
            for (const auto& [name, src] : rc.corpora) {
                auto data = mics::read_jsonl(src);
                std::int64_t lineno = 0;
                for (const auto& r : data.records) {
                    ++lineno;
                    std::string id;
                    for (const char* key : {"record_id", "item_id", "case_id", "id"}) {
                        if (r.contains(key) && r.at(key).is_string()) {
                            id = r.at(key).get<std::string>();
                            break;
                        }
                    }
                    if (id.empty()) id = "line-" + std::to_string(lineno);
                    payloads[name][id] = r;
                }
            }
            const std::string export_path =
                outdir + "/train-stage" + std::to_string(plan.stage) + ".jsonl";
            std::remove(export_path.c_str());
            mics::JsonlWriter exporter(export_path, make_header(rc));
            for (const auto& e : manifest.entries) exporter.append(payloads[e.corpus][e.record_id]);
        }
    }
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    spdlog::set_level(spdlog::level::warn);

    CLI::App app{"MICS reasoning-path search and data-synthesis toolkit"};
    app.require_subcommand(1);

    std::string config_path, input, output, replay_cache, scenario = "all";
    int workers = -1;
    std::uint64_t seed = 0;
    bool seed_set = false, export_records = false;
    int tolerance = -1;

    auto add_common = [&](CLI::App* cmd, bool needs_input = true) {
        cmd->add_option("--config", config_path, "JSON config file");
        if (needs_input) cmd->add_option("--input", input, "input JSONL")->required();
        cmd->add_option("--output", output, "output path")->required();
        cmd->add_option("--workers", workers, "worker pool width");
        cmd->add_option("--seed", seed, "seed override")->each([&](const std::string&) { seed_set = true; });
        cmd->add_option("--replay-cache", replay_cache, "serve all model calls from this cache");
        cmd->add_option("--tolerance", tolerance, "max tolerated search failures");
    };

    auto* search_cmd = app.add_subcommand("search", "run the collaborative search over VQA items");
    add_common(search_cmd);
    auto* replay_cmd = app.add_subcommand("replay", "search strictly from a recorded cache");
    add_common(replay_cmd);
    auto* qc_cmd = app.add_subcommand("qc", "trend-classify and filter search traces");
    add_common(qc_cmd);
    auto* genqa_cmd = app.add_subcommand("genqa", "generate QA quadruplets from cases");
    add_common(genqa_cmd);
    auto* align_cmd = app.add_subcommand("align", "build image-text alignment units");
    add_common(align_cmd);
    auto* scen_cmd = app.add_subcommand("scenarios", "generate scenario VQA items");
    add_common(scen_cmd);
    scen_cmd->add_option("--scenario", scenario,
                         "all | patient_to_doctor | doctor_to_doctor | intern_to_senior");
    auto* mix_cmd = app.add_subcommand("mix", "build stage-wise training manifests");
    add_common(mix_cmd, /*needs_input=*/false);
    mix_cmd->add_flag("--export", export_records, "materialize concatenated training JSONL");

    CLI11_PARSE(app, argc, argv);

    RunConfig rc;
    try {
        rc = load_config(config_path);
    } catch (const std::exception& e) {
        spdlog::error("config error: {}", e.what());
        return kExitConfig;
    }
    if (workers > 0) rc.workers = workers;
    if (seed_set) rc.seed = seed;
    if (tolerance >= 0) rc.tolerance = tolerance;

    try {
        if (search_cmd->parsed()) return cmd_search(rc, input, output, replay_cache);
        if (replay_cmd->parsed()) {
            if (replay_cache.empty()) replay_cache = rc.gateway.cache_path;
            if (replay_cache.empty()) {
                spdlog::error("replay requires --replay-cache or a configured cache_path");
                return kExitConfig;
            }
            return cmd_search(rc, input, output, replay_cache);
        }
        if (qc_cmd->parsed()) return cmd_qc(rc, input, output);
        if (genqa_cmd->parsed()) return cmd_genqa(rc, input, output, replay_cache);
        if (align_cmd->parsed()) return cmd_align(rc, input, output);
        if (scen_cmd->parsed()) return cmd_scenarios(rc, input, output, scenario, replay_cache);
        if (mix_cmd->parsed()) return cmd_mix(rc, output, export_records);
    } catch (const mics::curriculum::UnknownCorpus& e) {
        spdlog::error("{}", e.what());
        return kExitConfig;
    } catch (const std::exception& e) {
        spdlog::error("{}", e.what());
        return kExitIo;
    }
    return kExitConfig;
}
