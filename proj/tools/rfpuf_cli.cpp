/*
 Copyright 2026 rfpuf project contributors

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
*/
#include <cstdio>
#include <functional>
#include <string>

#include "CLI11.hpp"
#include "rfpuf/pipeline.hpp"

namespace {

using rfpuf::pipeline::ExperimentConfig;

struct Overrides {
    std::string config_path;
    std::string out_dir;
    uint64_t seed = 0;
    unsigned jobs = 0;
    bool has_seed = false, has_jobs = false, has_out = false;
};

ExperimentConfig resolve(const Overrides& ov) {
    ExperimentConfig cfg;
    if (!ov.config_path.empty()) cfg = rfpuf::pipeline::load_config(ov.config_path);
    if (ov.has_seed) cfg.seed = ov.seed;
    if (ov.has_jobs) cfg.jobs = ov.jobs;
    if (ov.has_out) cfg.out_dir = ov.out_dir;
    return cfg;
}

void add_common(CLI::App* sub, Overrides& ov) {
    sub->add_option("-c,--config", ov.config_path, "JSON config file (defaults apply if omitted)")
        ->check(CLI::ExistingFile);
    sub->add_option("--seed", ov.seed, "master RNG seed override")->each([&](const std::string&) {
        ov.has_seed = true;
    });
    sub->add_option("-j,--jobs", ov.jobs, "worker threads (0 = all cores)")
        ->each([&](const std::string&) { ov.has_jobs = true; });
    sub->add_option("-o,--out", ov.out_dir, "run directory override")->each([&](const std::string&) {
        ov.has_out = true;
    });
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"rfpuf: transmitter-fingerprint simulation, training, and analysis"};
    app.require_subcommand(1);

    Overrides ov;
    std::function<void(const ExperimentConfig&)> action;

    struct SubDef {
        const char* name;
        const char* help;
        void (*fn)(const ExperimentConfig&);
    };
    const SubDef subs[] = {
        {"simulate", "synthesize per-device capture files and indexes", rfpuf::pipeline::cmd_simulate},
        {"extract", "demodulate captures into a per-frame feature matrix", rfpuf::pipeline::cmd_extract},
        {"train", "split, train the MLP, and evaluate", rfpuf::pipeline::cmd_train},
        {"sweep", "accuracy grid over feature set, depth, width, frame budget",
         rfpuf::pipeline::cmd_sweep},
        {"channel-compare", "compare required network width with and without the wireless channel",
         rfpuf::pipeline::cmd_channel_compare},
        {"pufprops", "inter/intra distance statistics, distribution fits, identifiability",
         rfpuf::pipeline::cmd_pufprops},
        {"attack", "repeated k-means clustering attack on the feature matrix",
         rfpuf::pipeline::cmd_attack},
        {"report", "consolidate run artifacts into report.md", rfpuf::pipeline::cmd_report},
    };
    for (const auto& def : subs) {
        auto* sub = app.add_subcommand(def.name, def.help);
        add_common(sub, ov);
        sub->callback([&action, fn = def.fn] { action = fn; });
    }

    CLI11_PARSE(app, argc, argv);

    try {
        action(resolve(ov));
    } catch (const rfpuf::ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 1;
    } catch (const rfpuf::DataError& e) {
        std::fprintf(stderr, "data error: %s\n", e.what());
        return 2;
    } catch (const rfpuf::NumericError& e) {
        std::fprintf(stderr, "numeric error: %s\n", e.what());
        return 3;
    }
    return 0;
}
