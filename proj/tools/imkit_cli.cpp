// Copyright imkit contributors
// SPDX-License-Identifier: Apache-2.0
//
// Operator entry points: key generation, privacy reports, the two end-to-end
// demos, and the networked cloud/client pair.
//
// Exit codes: 0 ok, 2 config, 3 numeric, 4 protocol.

#include <atomic>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <thread>

#include <CLI11.hpp>
#include <json.hpp>

#include "imkit/casestudy_control.hpp"
#include "imkit/casestudy_ml.hpp"
#include "imkit/privacy.hpp"
#include "imkit/protocol.hpp"
#include "imkit/registry.hpp"

using json = nlohmann::json;
using namespace imkit;

namespace {

struct RunConfig {
    // scheme
    SchemeDims dims;
    SchemeScales scales;
    double sigma = 1e2;
    std::uint64_t seed = 1;
    // privacy
    double delta_y = 1.0;
    double delta_u = 1.0;
    // paths
    std::string scheme_path = "scheme.imkt";
    std::string out_dir = "out";
    // control demo
    long steps = 100;
    double step_size = 0.05;
    // ml demo
    std::string model = "logistic";
    std::string optimizer = "sgd";
    int epochs = 50;
    double eta = 0.001;
    double clip = 1000.0;
    Index records = 400;
    Index batch = 32;
    // networking
    std::string host = "127.0.0.1";
    std::uint16_t port = 4810;
    std::string algo = "echo";
    std::string inputs_csv;
    std::string transcript_path;
};

// Config file (JSON) supplies defaults; explicit flags override.
void apply_config_file(RunConfig& cfg, const std::string& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot open config file " + path);
    json j = json::parse(is, nullptr, true, true);
    auto get = [&](const char* key, auto& slot) {
        if (j.contains(key)) slot = j[key].get<std::decay_t<decltype(slot)>>();
    };
    if (j.contains("dims")) {
        auto d = j["dims"];
        cfg.dims.ny = d.value("ny", cfg.dims.ny);
        cfg.dims.nu = d.value("nu", cfg.dims.nu);
        cfg.dims.nzeta = d.value("nzeta", cfg.dims.nzeta);
        cfg.dims.ny_lift = d.value("ny_lift", cfg.dims.ny_lift);
        cfg.dims.nu_lift = d.value("nu_lift", cfg.dims.nu_lift);
        cfg.dims.nzeta_lift = d.value("nzeta_lift", cfg.dims.nzeta_lift);
    }
    if (j.contains("scales")) {
        auto s = j["scales"];
        cfg.scales.pi1 = s.value("pi1", cfg.scales.pi1);
        cfg.scales.pi2 = s.value("pi2", cfg.scales.pi2);
        cfg.scales.pi3 = s.value("pi3", cfg.scales.pi3);
        cfg.scales.pi4 = s.value("pi4", cfg.scales.pi4);
    }
    get("sigma", cfg.sigma);
    get("seed", cfg.seed);
    get("delta_y", cfg.delta_y);
    get("delta_u", cfg.delta_u);
    get("scheme", cfg.scheme_path);
    get("out_dir", cfg.out_dir);
    get("steps", cfg.steps);
    get("step_size", cfg.step_size);
    get("model", cfg.model);
    get("optimizer", cfg.optimizer);
    get("epochs", cfg.epochs);
    get("eta", cfg.eta);
    get("clip", cfg.clip);
    get("host", cfg.host);
    get("algo", cfg.algo);
}

std::vector<StepInput> load_inputs_csv(const std::string& path, Index ny) {
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot open inputs file " + path);
    std::vector<StepInput> inputs;
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::vector<double> vals;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) vals.push_back(std::stod(cell));
        if (static_cast<Index>(vals.size()) < ny)
            throw ConfigError("inputs row shorter than scheme ny");
        StepInput in;
        in.y = Vec(ny);
        for (Index i = 0; i < ny; ++i) in.y(i) = vals[static_cast<std::size_t>(i)];
        in.w = Vec(static_cast<Index>(vals.size()) - ny);
        for (Index i = ny; i < static_cast<Index>(vals.size()); ++i)
            in.w(i - ny) = vals[static_cast<std::size_t>(i)];
        inputs.push_back(std::move(in));
    }
    return inputs;
}

int cmd_keygen(const RunConfig& cfg) {
    NoiseSpec noise;
    noise.sigma = cfg.sigma;
    auto scheme = EncodingScheme::keygen(cfg.dims, cfg.scales, noise, cfg.seed);
    scheme.save(cfg.scheme_path);
    const auto report = privacy::make_report(scheme, {cfg.delta_y, cfg.delta_u});
    privacy::write_report_text(std::cout, report);
    std::ofstream rs(cfg.scheme_path + ".privacy.txt");
    privacy::write_report_text(rs, report);
    std::cout << "scheme written to " << cfg.scheme_path << "\n";
    return 0;
}

int cmd_privacy_report(const RunConfig& cfg, const std::string& csv_path) {
    auto scheme = EncodingScheme::load(cfg.scheme_path);
    const auto report = privacy::make_report(scheme, {cfg.delta_y, cfg.delta_u});
    privacy::write_report_text(std::cout, report);
    if (!csv_path.empty()) {
        std::ofstream os(csv_path);
        privacy::write_report_csv(os, report);
        std::cout << "row-wise bounds written to " << csv_path << "\n";
    }
    return 0;
}

int cmd_demo_control(const RunConfig& cfg) {
    control::ReactorParams params;
    params.step_size = cfg.step_size;
    SchemeDims dims{1, 1, 3, 3, 3, 4};
    SchemeScales scales{1e-2, 1e-2, 1e-2, 1e2};
    NoiseSpec noise;
    noise.sigma = cfg.sigma;
    auto scheme =
        std::make_shared<const EncodingScheme>(EncodingScheme::keygen(dims, scales, noise, cfg.seed));
    const auto traj =
        control::run_closed_loop_comparison(params, cfg.steps, scheme, cfg.seed ^ 0x5eedULL);
    control::export_figures_data(traj, cfg.out_dir);

    double max_err = 0.0, max_state = 0.0;
    for (long k = 0; k < traj.steps; ++k) {
        max_err = std::max(max_err, std::abs(traj.u[static_cast<std::size_t>(k)] -
                                             traj.u_hat[static_cast<std::size_t>(k)]));
        max_state = std::max({max_state, std::abs(traj.x1[static_cast<std::size_t>(k)]),
                              std::abs(traj.x2[static_cast<std::size_t>(k)])});
    }
    std::cout << "steps: " << traj.steps << "\n";
    std::cout << "max |u - u_hat|: " << max_err << "\n";
    std::cout << "max |state|: " << max_state << "\n";
    std::cout << "runtime plain: " << traj.seconds_plain
              << " s, encoded: " << traj.seconds_encoded << " s, ratio: "
              << (traj.seconds_plain > 0 ? traj.seconds_encoded / traj.seconds_plain : 0.0)
              << "\n";
    std::cout << "CSV files in " << cfg.out_dir << "\n";
    return 0;
}

int cmd_demo_ml(const RunConfig& cfg) {
    ml::ModelSpec model;
    model.kind = cfg.model == "mlp" ? ml::ModelKind::Mlp : ml::ModelKind::Logistic;
    model.in_dim = 2;
    model.classes = 2;
    model.hidden = 8;

    ml::OptimizerConfig opt;
    opt.kind = cfg.optimizer == "adam" ? ml::OptimizerKind::Adam : ml::OptimizerKind::Sgd;
    opt.eta = cfg.eta;
    opt.alpha = cfg.eta;
    opt.clip = cfg.clip;
    opt.epochs = cfg.epochs;
    opt.batch = cfg.batch;
    opt.schedule_seed = cfg.seed + 1;
    opt.init_seed = cfg.seed + 2;

    const auto ds = ml::make_blobs(cfg.records, model.in_dim, model.classes, 0.08, cfg.seed);
    const Index nw = model.param_count();
    SchemeDims dims{ds.record_dim(), nw, nw, ds.record_dim() + 3, nw + 4, nw + 4};
    SchemeScales scales{1e-1, 1e-1, 1e-1, 1e1};
    NoiseSpec noise;
    noise.sigma = cfg.sigma;
    const auto scheme = EncodingScheme::keygen(dims, scales, noise, cfg.seed + 3);

    std::filesystem::create_directories(cfg.out_dir);
    const std::string csv = cfg.out_dir + "/ml_metrics.csv";
    const auto bench = ml::benchmark(model, ds, opt, scheme, cfg.seed + 4, csv);

    std::cout << "model: " << cfg.model << ", optimizer: " << cfg.optimizer
              << ", params: " << nw << ", records: " << ds.size() << "\n";
    std::cout << "final-parameter linf gap (decoded SIML vs plain): " << bench.param_gap_linf
              << "\n";
    std::cout << "final accuracy plain: " << bench.plain_acc.back()
              << ", siml: " << bench.siml_acc.back() << "\n";
    std::cout << "train time plain: " << bench.plain_seconds
              << " s, siml: " << bench.siml_seconds << " s\n";
    std::cout << "metrics written to " << csv << "\n";
    return 0;
}

int cmd_serve(const RunConfig& cfg) {
    auto scheme = std::make_shared<const EncodingScheme>(EncodingScheme::load(cfg.scheme_path));
    protocol::CloudServer server(scheme, builtin_algorithms(scheme->dims()));
    protocol::TcpListener listener(cfg.port);
    std::cout << "cloud listening on " << cfg.host << ":" << listener.port() << std::endl;
    while (true) {
        auto transport = std::make_shared<protocol::SocketTransport>(listener.accept_one());
        std::thread([transport, &server] { server.serve_connection(*transport); }).detach();
    }
}

int cmd_client(const RunConfig& cfg) {
    auto scheme = std::make_shared<const EncodingScheme>(EncodingScheme::load(cfg.scheme_path));
    const auto inputs = load_inputs_csv(cfg.inputs_csv, scheme->dims().ny);
    protocol::ClientSession session(scheme, cfg.algo, cfg.seed);
    protocol::Transcript transcript;
    auto transport = protocol::SocketTransport::connect_to(cfg.host, cfg.port);
    const auto utilities = protocol::run_client_session(transport, session, inputs, &transcript);
    if (!cfg.transcript_path.empty()) transcript.save(cfg.transcript_path);

    std::ofstream os(cfg.out_dir);
    if (!os) throw ConfigError("cannot open output file " + cfg.out_dir);
    os.precision(17);
    for (const auto& u : utilities) {
        for (Index i = 0; i < u.size(); ++i) os << u(i) << (i + 1 < u.size() ? "," : "");
        os << "\n";
    }
    std::cout << "ran " << utilities.size() << " steps; decoded utilities written to "
              << cfg.out_dir << "\n";
    if (!cfg.transcript_path.empty())
        std::cout << "transcript written to " << cfg.transcript_path << "\n";
    return 0;
}

int cmd_replay(const RunConfig& cfg) {
    const auto transcript = protocol::Transcript::load(cfg.transcript_path);
    transcript.validate();
    std::size_t steps = 0;
    for (std::size_t i = 0; i < transcript.size(); ++i)
        if (transcript.message(i).kind == protocol::MsgKind::Utility) ++steps;
    std::cout << "transcript ok: " << transcript.size() << " messages, " << steps
              << " completed steps\n";
    if (!cfg.scheme_path.empty() && std::filesystem::exists(cfg.scheme_path)) {
        auto scheme = EncodingScheme::load(cfg.scheme_path);
        // Re-decode utilities against the retained inputs in the transcript.
        std::map<std::uint64_t, EncodedInput> retained;
        std::cout.precision(12);
        for (std::size_t i = 0; i < transcript.size(); ++i) {
            const auto msg = transcript.message(i);
            if (msg.kind == protocol::MsgKind::Input)
                retained[msg.step] = EncodedInput{msg.ytilde, msg.step};
            else if (msg.kind == protocol::MsgKind::Utility) {
                const Vec u = scheme.decode_utility({msg.utilde, msg.step}, retained.at(msg.step));
                std::cout << "step " << msg.step << " u = " << u.transpose() << "\n";
            }
        }
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"immersion-based coding toolkit"};
    app.require_subcommand(1);
    RunConfig cfg;
    std::string config_file, csv_path;

    app.add_option("--config", config_file, "JSON config file with defaults");

    auto* keygen = app.add_subcommand("keygen", "generate a scheme file and privacy report");
    keygen->add_option("--ny", cfg.dims.ny);
    keygen->add_option("--nu", cfg.dims.nu);
    keygen->add_option("--nzeta", cfg.dims.nzeta);
    keygen->add_option("--ny-lift", cfg.dims.ny_lift);
    keygen->add_option("--nu-lift", cfg.dims.nu_lift);
    keygen->add_option("--nzeta-lift", cfg.dims.nzeta_lift);
    keygen->add_option("--pi1-scale", cfg.scales.pi1);
    keygen->add_option("--pi2-scale", cfg.scales.pi2);
    keygen->add_option("--pi3-scale", cfg.scales.pi3);
    keygen->add_option("--pi4-scale", cfg.scales.pi4);
    keygen->add_option("--sigma", cfg.sigma);
    keygen->add_option("--seed", cfg.seed);
    keygen->add_option("--delta-y", cfg.delta_y);
    keygen->add_option("--delta-u", cfg.delta_u);
    keygen->add_option("--out", cfg.scheme_path);

    auto* report = app.add_subcommand("privacy-report", "print epsilon bounds for a scheme");
    report->add_option("--scheme", cfg.scheme_path)->required();
    report->add_option("--delta-y", cfg.delta_y);
    report->add_option("--delta-u", cfg.delta_u);
    report->add_option("--csv", csv_path);

    auto* demo_control = app.add_subcommand("demo-control", "reactor closed loop, plain vs encoded");
    demo_control->add_option("--steps", cfg.steps);
    demo_control->add_option("--step-size", cfg.step_size);
    demo_control->add_option("--sigma", cfg.sigma);
    demo_control->add_option("--seed", cfg.seed);
    demo_control->add_option("--out-dir", cfg.out_dir);

    auto* demo_ml = app.add_subcommand("demo-ml", "training, plain vs SIML");
    demo_ml->add_option("--model", cfg.model)->check(CLI::IsMember({"logistic", "mlp"}));
    demo_ml->add_option("--optimizer", cfg.optimizer)->check(CLI::IsMember({"sgd", "adam"}));
    demo_ml->add_option("--epochs", cfg.epochs);
    demo_ml->add_option("--eta", cfg.eta);
    demo_ml->add_option("--clip", cfg.clip);
    demo_ml->add_option("--records", cfg.records);
    demo_ml->add_option("--batch", cfg.batch);
    demo_ml->add_option("--sigma", cfg.sigma);
    demo_ml->add_option("--seed", cfg.seed);
    demo_ml->add_option("--out-dir", cfg.out_dir);

    auto* serve = app.add_subcommand("serve", "run the cloud endpoint");
    serve->add_option("--scheme", cfg.scheme_path)->required();
    serve->add_option("--port", cfg.port);

    auto* client = app.add_subcommand("client", "drive a session from an input CSV");
    client->add_option("--scheme", cfg.scheme_path)->required();
    client->add_option("--algo", cfg.algo);
    client->add_option("--host", cfg.host);
    client->add_option("--port", cfg.port);
    client->add_option("--inputs", cfg.inputs_csv)->required();
    client->add_option("--seed", cfg.seed);
    client->add_option("--transcript", cfg.transcript_path);
    client->add_option("--out", cfg.out_dir)->required();

    auto* replay = app.add_subcommand("replay", "validate and summarize a transcript");
    replay->add_option("--transcript", cfg.transcript_path)->required();
    replay->add_option("--scheme", cfg.scheme_path);

    try {
        app.parse(argc, argv);
        if (!config_file.empty()) apply_config_file(cfg, config_file);
        if (keygen->parsed()) return cmd_keygen(cfg);
        if (report->parsed()) return cmd_privacy_report(cfg, csv_path);
        if (demo_control->parsed()) return cmd_demo_control(cfg);
        if (demo_ml->parsed()) return cmd_demo_ml(cfg);
        if (serve->parsed()) return cmd_serve(cfg);
        if (client->parsed()) return cmd_client(cfg);
        if (replay->parsed()) return cmd_replay(cfg);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 2;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const DimensionError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const IoError& e) {
        std::cerr << "io error: " << e.what() << "\n";
        return 2;
    } catch (const NumericError& e) {
        std::cerr << "numeric error: " << e.what() << "\n";
        return 3;
    } catch (const RankError& e) {
        std::cerr << "numeric error: " << e.what() << "\n";
        return 3;
    } catch (const GenerationError& e) {
        std::cerr << "numeric error: " << e.what() << "\n";
        return 3;
    } catch (const InvalidSchemeError& e) {
        std::cerr << "numeric error: " << e.what() << "\n";
        return 3;
    } catch (const ProtocolError& e) {
        std::cerr << "protocol error: " << e.what() << "\n";
        return 4;
    }
    return 0;
}
