#include <cmath>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "dicos/harness/checkpoint.hpp"
#include "dicos/harness/evaluate.hpp"
#include "dicos/harness/train.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using namespace dicos;

namespace {

constexpr int kExitValidation = 2;
constexpr int kExitDivergence = 3;

void apply_overrides(harness::TrainConfig& cfg, const std::vector<std::string>& sets) {
    for (const auto& kv : sets) {
        auto eq = kv.find('=');
        if (eq == std::string::npos) throw corpus::ValidationError("--set expects key=value, got '" + kv + "'");
        cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
    }
    cfg.validate();
}

// Dialogues for prediction may omit "states"; they are treated as unannotated.
corpus::DialogueCorpus load_unlabelled(const fs::path& path, const corpus::SlotSchema& schema) {
    std::ifstream in(path);
    if (!in) throw corpus::ValidationError("cannot open " + path.string());
    corpus::DialogueCorpus out;
    std::size_t line_no = 0;
    for (std::string line; std::getline(in, line);) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        json record;
        try {
            record = json::parse(line);
        } catch (const json::parse_error& e) {
            throw corpus::ValidationError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
        }
        if (record.is_object() && !record.contains("states") && record.contains("turns") &&
            record["turns"].is_array()) {
            record["states"] = json::array();
            for (std::size_t i = 0; i < record["turns"].size(); ++i) record["states"].push_back(json::object());
        }
        out.dialogues.push_back(corpus::parse_dialogue(record.dump(), schema, line_no));
    }
    if (out.dialogues.empty()) throw corpus::ValidationError(path.string() + ": no dialogues");
    return out;
}

json state_json(const corpus::DialogueState& state, const corpus::SlotSchema& schema) {
    json s = json::object();
    for (std::size_t j = 0; j < schema.size(); ++j) {
        if (state.values[j] != corpus::kNone) s[schema[j].name] = state.values[j];
    }
    return s;
}

std::unique_ptr<harness::Model> load_for(const fs::path& ckpt, const std::optional<fs::path>& schema_path) {
    auto model = harness::load_checkpoint(ckpt);
    if (schema_path) harness::require_same_schema(model->schema(), corpus::SlotSchema::load(*schema_path));
    return model;
}

std::vector<std::uint64_t> parse_seeds(const std::string& text) {
    std::vector<std::uint64_t> seeds;
    std::stringstream ss(text);
    for (std::string item; std::getline(ss, item, ',');) {
        try {
            std::size_t used = 0;
            seeds.push_back(std::stoull(item, &used));
            if (used != item.size()) throw std::invalid_argument(item);
        } catch (const std::exception&) {
            throw corpus::ValidationError("--seeds expects comma-separated integers, got '" + text + "'");
        }
    }
    if (seeds.empty()) throw corpus::ValidationError("--seeds is empty");
    return seeds;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Dialogue state tracking with per-slot dialogue selection"};
    app.require_subcommand(1);

    // generate-data
    auto* gen = app.add_subcommand("generate-data", "Write a synthetic JSONL corpus");
    std::string gen_schema, gen_out, gen_prefix = "syn";
    std::size_t gen_n = 200, gen_turns = 6;
    double gen_coref = 0.3;
    std::uint64_t gen_seed = 0;
    gen->add_option("--schema", gen_schema, "Slot schema JSON")->required();
    gen->add_option("--out", gen_out, "Output JSONL")->required();
    gen->add_option("--n", gen_n, "Number of dialogues");
    gen->add_option("--max-turns", gen_turns, "Maximum turns per dialogue");
    gen->add_option("--coref-rate", gen_coref, "Probability of phrasing an eligible update as a reference");
    gen->add_option("--seed", gen_seed, "Random seed");
    gen->add_option("--prefix", gen_prefix, "Dialogue id prefix");

    // train
    auto* tr = app.add_subcommand("train", "Train a model and write a checkpoint directory");
    std::string tr_config, tr_data, tr_out, tr_schema, tr_seeds, tr_eval;
    std::vector<std::string> tr_sets;
    tr->add_option("--config", tr_config, "key=value config file");
    tr->add_option("--data", tr_data, "Training JSONL")->required();
    tr->add_option("--out", tr_out, "Checkpoint directory")->required();
    tr->add_option("--schema", tr_schema, "Slot schema JSON (overrides the config key)");
    tr->add_option("--set", tr_sets, "Override a config key (key=value)");
    tr->add_option("--seeds", tr_seeds, "Comma-separated seeds; one checkpoint per seed under --out");
    tr->add_option("--eval", tr_eval, "Held-out JSONL scored after each seed");

    // eval
    auto* ev = app.add_subcommand("eval", "Tracked evaluation of a checkpoint");
    std::string ev_ckpt, ev_data, ev_mode = "dicos", ev_out, ev_schema;
    std::optional<std::size_t> ev_k;
    unsigned ev_mask = 7;
    bool ev_replay = false;
    ev->add_option("--ckpt", ev_ckpt, "Checkpoint directory")->required();
    ev->add_option("--data", ev_data, "Evaluation JSONL")->required();
    ev->add_option("--mode", ev_mode, "dicos or granularity");
    ev->add_option("--k", ev_k, "Selected history turns (default: from the checkpoint config)");
    ev->add_option("--mask", ev_mask, "Active perspectives as bits: 1 SN-DH, 2 CT-DH, 4 IMOR")
        ->check(CLI::Range(0U, 7U));
    ev->add_flag("--gold-replay", ev_replay, "Feed gold previous states");
    ev->add_option("--out", ev_out, "Also write the report JSON here");
    ev->add_option("--schema", ev_schema, "Schema the data was written against");

    // ablate
    auto* ab = app.add_subcommand("ablate", "Evaluate every perspective combination");
    std::string ab_ckpt, ab_data;
    std::optional<std::size_t> ab_k;
    ab->add_option("--ckpt", ab_ckpt, "Checkpoint directory")->required();
    ab->add_option("--data", ab_data, "Evaluation JSONL")->required();
    ab->add_option("--k", ab_k, "Selected history turns");

    // predict
    auto* pr = app.add_subcommand("predict", "Per-turn predictions as JSON lines");
    std::string pr_ckpt, pr_dialogue;
    std::optional<std::size_t> pr_k;
    pr->add_option("--ckpt", pr_ckpt, "Checkpoint directory")->required();
    pr->add_option("--dialogue", pr_dialogue, "JSONL with one dialogue per line; states optional")->required();
    pr->add_option("--k", pr_k, "Selected history turns");

    // inspect-graph
    auto* ig = app.add_subcommand("inspect-graph", "Dump the selection graph of one slot at one turn");
    std::string ig_ckpt, ig_dialogue, ig_slot;
    int ig_turn = 1;
    std::size_t ig_index = 0;
    ig->add_option("--ckpt", ig_ckpt, "Checkpoint directory")->required();
    ig->add_option("--dialogue", ig_dialogue, "JSONL with dialogues")->required();
    ig->add_option("--turn", ig_turn, "Turn (1-based)")->required();
    ig->add_option("--slot", ig_slot, "Slot name")->required();
    ig->add_option("--index", ig_index, "Dialogue line to use (0-based)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitValidation;
    }

    try {
        if (*gen) {
            auto schema = corpus::SlotSchema::load(gen_schema);
            corpus::SynthOptions o{gen_n, gen_turns, gen_coref, gen_seed, gen_prefix};
            auto c = corpus::synthesize_corpus(schema, o);
            corpus::save_corpus(gen_out, c, schema);
            std::cout << "wrote " << c.dialogues.size() << " dialogues (" << c.turn_count() << " turns) to " << gen_out
                      << "\n";
        } else if (*tr) {
            harness::TrainConfig cfg = tr_config.empty() ? harness::TrainConfig() : harness::TrainConfig::load(tr_config);
            apply_overrides(cfg, tr_sets);
            const std::string schema_path = tr_schema.empty() ? cfg.schema : tr_schema;
            if (schema_path.empty()) throw corpus::ValidationError("no schema: pass --schema or set schema=");
            cfg.schema = schema_path;
            auto schema = corpus::SlotSchema::load(schema_path);
            auto data = corpus::load_corpus(tr_data, schema);
            std::optional<corpus::DialogueCorpus> held;
            if (!tr_eval.empty()) held = corpus::load_corpus(tr_eval, schema);

            const bool sweep = !tr_seeds.empty();
            const std::vector<std::uint64_t> seeds = sweep ? parse_seeds(tr_seeds) : std::vector{cfg.seed};
            std::vector<double> joint;
            for (auto seed : seeds) {
                cfg.seed = seed;
                harness::Model model(cfg, schema, encoder::Vocabulary::build(data, schema));
                harness::train(model, data, &std::cout);
                const fs::path dir = sweep ? fs::path(tr_out) / ("seed-" + std::to_string(seed)) : fs::path(tr_out);
                harness::save_checkpoint(dir, model);
                std::cout << "checkpoint " << dir.string() << "\n";
                if (held) {
                    auto r = harness::evaluate(model, *held, {harness::SelectionMode::dicos, cfg.k, {}, false});
                    joint.push_back(r.joint_goal_accuracy);
                    std::cout << "seed " << seed << " joint " << r.joint_goal_accuracy << "\n";
                }
            }
            if (joint.size() > 1) {
                double mean = 0.0;
                for (double x : joint) mean += x;
                mean /= static_cast<double>(joint.size());
                double var = 0.0;
                for (double x : joint) var += (x - mean) * (x - mean);
                std::cout << "mean joint " << mean << " sd " << std::sqrt(var / static_cast<double>(joint.size() - 1))
                          << " over " << joint.size() << " seeds\n";
            }
        } else if (*ev) {
            auto model = load_for(ev_ckpt, ev_schema.empty() ? std::nullopt : std::optional<fs::path>(ev_schema));
            auto data = corpus::load_corpus(ev_data, model->schema());
            harness::EvalOptions o;
            o.mode = harness::parse_mode(ev_mode);
            o.k = ev_k.value_or(model->config().k);
            o.mask = selector::PerspectiveMask::from_bits(ev_mask);
            o.gold_replay = ev_replay;
            const std::string report = harness::evaluate(*model, data, o).to_json();
            std::cout << report << "\n";
            if (!ev_out.empty()) std::ofstream(ev_out) << report << "\n";
        } else if (*ab) {
            auto model = harness::load_checkpoint(ab_ckpt);
            auto data = corpus::load_corpus(ab_data, model->schema());
            auto rows = harness::ablate(*model, data, ab_k.value_or(model->config().k));
            std::printf("%-22s %8s %8s %8s\n", "perspectives", "joint", "slot", "recall");
            for (const auto& r : rows) {
                std::printf("%-22s %8.4f %8.4f %8.4f\n", r.mask.name().c_str(), r.report.joint_goal_accuracy,
                            r.report.slot_accuracy, r.report.selection_recall);
            }
        } else if (*pr) {
            auto model = harness::load_checkpoint(pr_ckpt);
            const auto& schema = model->schema();
            auto data = load_unlabelled(pr_dialogue, schema);
            harness::InferenceOptions o;
            o.k = pr_k.value_or(model->config().k);
            for (const auto& d : data.dialogues) {
                corpus::DialogueState prev = corpus::DialogueState::empty(schema);
                std::vector<corpus::DialogueState> history;
                encoder::EncodingCache cache;
                for (int T = 1; T <= static_cast<int>(d.size()); ++T) {
                    harness::TurnTrace t = model->predict_turn(d, T, prev, history, o, {}, &cache);
                    json line;
                    line["dialogue_id"] = d.dialogue_id;
                    line["turn"] = T;
                    line["updates"] = json::array();
                    for (const auto& u : t.updates) {
                        line["updates"].push_back({{"slot", schema[u.slot].name},
                                                   {"method", generator::method_name(u.prediction.method)},
                                                   {"value", u.prediction.value},
                                                   {"selected_turns", u.selected}});
                    }
                    line["state"] = state_json(t.state, schema);
                    std::cout << line.dump() << "\n";
                    prev = t.state;
                    history.push_back(t.state);
                }
            }
        } else if (*ig) {
            auto model = harness::load_checkpoint(ig_ckpt);
            const auto& schema = model->schema();
            auto data = load_unlabelled(ig_dialogue, schema);
            if (ig_index >= data.dialogues.size()) throw corpus::ValidationError("--index beyond the file");
            const auto& d = data.dialogues[ig_index];
            if (ig_turn < 1 || static_cast<std::size_t>(ig_turn) > d.size()) {
                throw corpus::ValidationError("--turn must lie in 1.." + std::to_string(d.size()));
            }
            auto slot = schema.index_of(ig_slot);
            if (!slot) throw corpus::ValidationError("unknown slot '" + ig_slot + "'");

            // tracked states up to T-1 supply B_{T-1} and the latest-update turns
            harness::InferenceOptions o;
            o.k = model->config().k;
            corpus::DialogueState prev = corpus::DialogueState::empty(schema);
            std::vector<corpus::DialogueState> history;
            encoder::EncodingCache cache;
            for (int t = 1; t < ig_turn; ++t) {
                prev = model->predict_turn(d, t, prev, history, o, {}, &cache).state;
                history.push_back(prev);
            }
            NoGradGuard no_grad;
            std::mt19937_64 rng(0);
            auto batch = encoder::encode_turns(model->encoder(), d, ig_turn, prev, schema, model->vocab(), false, rng);
            auto latest = selector::latest_update_turns(history, schema.size());
            auto graph = model->selector().build_graph(batch, *slot, schema, latest);
            json out;
            out["dialogue_id"] = d.dialogue_id;
            out["turn"] = ig_turn;
            out["slot"] = ig_slot;
            out["nodes"] = json::array();
            for (std::size_t i = 0; i < graph.node_count(); ++i) {
                double sq = 0.0;
                for (std::size_t c = 0; c < graph.init.cols(); ++c) sq += graph.init.at(i, c) * graph.init.at(i, c);
                json node{{"id", i}};
                if (i < graph.n_turns) {
                    node["type"] = "dialogue";
                    node["turn"] = i + 1;
                } else {
                    node["type"] = "slot-value";
                    node["slot"] = schema[i - graph.n_turns].name;
                    node["latest_update"] = graph.latest_update[i - graph.n_turns];
                }
                node["init_norm"] = std::sqrt(sq);
                out["nodes"].push_back(node);
            }
            out["edges"] = json::array();
            for (const auto& e : graph.edges) out["edges"].push_back({{"a", e.a}, {"b", e.b}, {"type", e.type}});
            if (ig_turn > 1 && o.k > 0) {
                auto sel = model->selector().select(batch, *slot, schema, latest);
                out["scores"] = sel.history_scores;
                out["selected_turns"] = sel.selected;
            }
            std::cout << out.dump(2) << "\n";
        }
    } catch (const harness::DivergenceError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitDivergence;
    } catch (const corpus::ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitValidation;
    } catch (const encoder::ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitValidation;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
