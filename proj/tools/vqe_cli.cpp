// Command-line front end: gen / label / train / query / report subcommands.

#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "vqe/engine.hpp"
#include "vqe/frameql.hpp"
#include "vqe/proxy.hpp"
#include "vqe/synthgen.hpp"
#include "vqe/tracestore.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitQueryError = 1;
constexpr int kExitIoError = 2;

vqe::synth::ClassSpec parse_class_spec(const std::string& s) {
    // name:occupancy:mean_duration
    std::istringstream is(s);
    std::string name, occ, dur;
    if (!std::getline(is, name, ':') || !std::getline(is, occ, ':') || !std::getline(is, dur))
        throw CLI::ValidationError("--class expects name:occupancy:mean_duration");
    return {name, std::stod(occ), std::stod(dur)};
}

std::pair<std::int64_t, std::int64_t> parse_range(const std::string& s) {
    auto colon = s.find(':');
    if (colon == std::string::npos)
        throw CLI::ValidationError("range expects begin:end");
    return {std::stoll(s.substr(0, colon)), std::stoll(s.substr(colon + 1))};
}

void apply_config_overrides(vqe::engine::EngineConfig& cfg,
                            const std::vector<std::string>& overrides) {
    for (const auto& kv : overrides) {
        auto eq = kv.find('=');
        if (eq == std::string::npos)
            throw CLI::ValidationError("--config expects key=value");
        std::string key = kv.substr(0, eq);
        std::string value = kv.substr(eq + 1);
        if (key == "rewrite_threshold")
            cfg.rewrite_threshold = std::stod(value);
        else if (key == "bootstrap_B")
            cfg.bootstrap_B = std::stoi(value);
        else if (key == "proxy_epochs")
            cfg.train.epochs = std::stoi(value);
        else if (key == "proxy_step")
            cfg.train.step_size = std::stod(value);
        else if (key == "train_frac")
            cfg.train_frac = std::stod(value);
        else if (key == "heldout_frac")
            cfg.heldout_frac = std::stod(value);
        else
            throw CLI::ValidationError("unknown config key: " + key);
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"FrameQL query engine over video-detection traces"};
    app.require_subcommand(1);

    // gen
    auto* gen = app.add_subcommand("gen", "generate a synthetic trace");
    vqe::synth::TraceSpec spec;
    std::vector<std::string> class_specs;
    std::string gen_out;
    std::vector<std::string> rare_conjuncts;
    double rare_prevalence = 0.0;
    int rare_duration = 1;
    int rare_separation = 0;
    gen->add_option("--out", gen_out, "output trace path")->required();
    gen->add_option("--name", spec.name, "trace name");
    gen->add_option("--frames", spec.n_frames, "number of frames")->required();
    gen->add_option("--class", class_specs, "class spec name:occupancy:mean_duration");
    gen->add_option("--width", spec.width);
    gen->add_option("--height", spec.height);
    gen->add_option("--fps", spec.fps);
    gen->add_option("--feature-dim", spec.feature_dim);
    gen->add_option("--snr", spec.feature_snr, "feature signal-to-noise ratio (0 = noise-free)");
    gen->add_option("--red-class", spec.red_class);
    gen->add_option("--red-fraction", spec.red_fraction);
    gen->add_option("--red-level", spec.red_level);
    gen->add_option("--seed", spec.seed);
    gen->add_option("--rare-conjunct", rare_conjuncts, "rare event conjunct class:min_count");
    gen->add_option("--rare-prevalence", rare_prevalence);
    gen->add_option("--rare-duration", rare_duration);
    gen->add_option("--rare-separation", rare_separation);

    // label
    auto* label = app.add_subcommand("label", "run the offline oracle pass over a range");
    std::string label_trace, label_range, label_out;
    label->add_option("--trace", label_trace)->required();
    label->add_option("--range", label_range, "frame range begin:end")->required();
    label->add_option("--out", label_out, "labels output path");

    // train
    auto* train = app.add_subcommand("train", "train and save a proxy model");
    std::string train_trace, train_out, train_range_s;
    std::vector<std::string> train_classes;
    vqe::proxy::TrainConfig train_cfg;
    train->add_option("--trace", train_trace)->required();
    train->add_option("--classes", train_classes, "object classes to count")->required();
    train->add_option("--range", train_range_s, "training frame range begin:end");
    train->add_option("--epochs", train_cfg.epochs);
    train->add_option("--batch", train_cfg.batch_size);
    train->add_option("--step", train_cfg.step_size);
    train->add_option("--seed", train_cfg.seed);
    train->add_option("--out", train_out, "model output path")->required();

    // query
    auto* query = app.add_subcommand("query", "run a FrameQL query against a trace");
    std::string q_trace, q_sql, q_sql_file, q_out;
    std::vector<std::string> q_config;
    std::uint64_t q_seed = 0;
    query->add_option("--trace", q_trace)->required();
    auto* sql_opt = query->add_option("--sql", q_sql, "FrameQL text");
    query->add_option("--sql-file", q_sql_file, "path to FrameQL text")->excludes(sql_opt);
    query->add_option("--seed", q_seed);
    query->add_option("--config", q_config, "key=value overrides");
    query->add_option("--out", q_out, "write the report here as well");

    // report
    auto* report = app.add_subcommand("report", "pretty-print a saved report");
    std::string report_path;
    report->add_option("path", report_path)->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (gen->parsed()) {
            for (const auto& cs : class_specs) spec.classes.push_back(parse_class_spec(cs));
            if (spec.feature_dim < static_cast<int>(spec.classes.size()))
                spec.feature_dim = static_cast<int>(spec.classes.size());
            if (!rare_conjuncts.empty()) {
                vqe::synth::RarePattern rp;
                for (const auto& c : rare_conjuncts) {
                    auto colon = c.find(':');
                    rp.conjuncts.push_back(
                        {c.substr(0, colon), std::stoi(c.substr(colon + 1))});
                }
                rp.prevalence = rare_prevalence;
                rp.duration = rare_duration;
                rp.min_separation = rare_separation;
                spec.rare = rp;
            }
            auto trace = vqe::synth::generate(spec);
            vqe::save_trace(trace, gen_out);
            std::cout << "wrote " << trace.n_frames() << " frames to " << gen_out << "\n";
            return kExitOk;
        }

        if (label->parsed()) {
            auto trace = vqe::load_trace(label_trace);
            auto [begin, end] = parse_range(label_range);
            vqe::Oracle oracle(trace);
            nlohmann::json frames = nlohmann::json::array();
            for (std::int64_t t = begin; t < end; ++t) {
                auto recs = oracle.detect(t);
                nlohmann::json counts = nlohmann::json::object();
                for (const auto& r : recs) {
                    counts[r.object_class] = counts.value(r.object_class, 0) + 1;
                }
                frames.push_back({{"t", t}, {"counts", std::move(counts)}});
            }
            nlohmann::json j{{"trace", trace.name},
                             {"range", {begin, end}},
                             {"oracle_calls", oracle.call_count()},
                             {"offline_cost_units", oracle.cost_units()},
                             {"frames", std::move(frames)}};
            if (!label_out.empty()) {
                std::ofstream out(label_out);
                if (!out) throw vqe::TraceIoError("cannot open " + label_out);
                out << j.dump(2) << "\n";
            } else {
                std::cout << j.dump(2) << "\n";
            }
            return kExitOk;
        }

        if (train->parsed()) {
            auto trace = vqe::load_trace(train_trace);
            vqe::FrameRange range{0, trace.n_frames()};
            if (!train_range_s.empty()) {
                auto [b, e] = parse_range(train_range_s);
                range = {b, e};
            }
            auto model = vqe::proxy::train(trace, range, train_classes, train_cfg);
            vqe::proxy::save_model(model, train_out);
            std::cout << "wrote model with " << model.heads.size() << " heads to " << train_out
                      << "\n";
            return kExitOk;
        }

        if (query->parsed()) {
            std::string sql = q_sql;
            if (!q_sql_file.empty()) {
                std::ifstream in(q_sql_file);
                if (!in) throw vqe::TraceIoError("cannot open " + q_sql_file);
                std::ostringstream os;
                os << in.rdbuf();
                sql = os.str();
            }
            if (sql.empty()) {
                std::cerr << "query: one of --sql or --sql-file is required\n";
                return kExitQueryError;
            }
            auto trace = vqe::load_trace(q_trace);
            vqe::engine::EngineConfig cfg;
            cfg.seed = q_seed;
            apply_config_overrides(cfg, q_config);
            vqe::engine::Engine eng(trace, cfg);

            vqe::frameql::Query parsed;
            try {
                parsed = vqe::frameql::parse(sql);
            } catch (const vqe::frameql::ParseError& e) {
                std::cerr << "query error: " << e.what() << "\n";
                return kExitQueryError;
            }
            auto rep = eng.run(parsed);
            std::string text = rep.to_json().dump(2);
            std::cout << text << "\n";
            if (!q_out.empty()) {
                std::ofstream out(q_out);
                if (!out) throw vqe::TraceIoError("cannot open " + q_out);
                out << text << "\n";
            }
            return kExitOk;
        }

        if (report->parsed()) {
            std::ifstream in(report_path);
            if (!in) throw vqe::TraceIoError("cannot open " + report_path);
            nlohmann::json j = nlohmann::json::parse(in);
            std::cout << "plan:          " << j.value("plan", std::string("?")) << "\n";
            if (j.contains("value")) std::cout << "value:         " << j["value"].dump() << "\n";
            if (j.contains("half_width"))
                std::cout << "half_width:    " << j["half_width"].dump() << "\n";
            if (j.contains("timestamps"))
                std::cout << "timestamps:    " << j["timestamps"].dump() << "\n";
            if (j.contains("records"))
                std::cout << "records:       " << j["records"].size() << "\n";
            std::cout << "oracle_calls:  " << j.value("oracle_calls", 0) << "\n"
                      << "cost_units:    " << j.value("cost_units", 0.0) << "\n"
                      << "proxy_cost:    " << j.value("proxy_cost_units", 0.0) << "\n"
                      << "offline_cost:  " << j.value("offline_cost_units", 0.0) << "\n";
            return kExitOk;
        }
    } catch (const vqe::TraceIoError& e) {
        std::cerr << "io error: " << e.what() << "\n";
        return kExitIoError;
    } catch (const nlohmann::json::exception& e) {
        std::cerr << "io error: " << e.what() << "\n";
        return kExitIoError;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitQueryError;
    }
    return kExitOk;
}
