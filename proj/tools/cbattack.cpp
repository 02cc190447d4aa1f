// Copyright 2026 The cbattack Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// cbattack hash|attack|evaluate --config <file> [--jobs N] [--out DIR]

#include "cbattack/harness.hpp"

#include <CLI11.hpp>

#include <iostream>

int main(int argc, char** argv)
{
    CLI::App app{"Similarity attacks on cancelable biometric templates"};
    app.require_subcommand(1, 1);

    std::string config;
    std::size_t jobs = 0;
    std::string out;
    for (const char* name : {"hash", "attack", "evaluate"}) {
        auto* sub = app.add_subcommand(name);
        sub->add_option("--config", config, "JSON run configuration")->required();
        sub->add_option("--jobs", jobs, "worker threads (overrides the config)");
        sub->add_option("--out", out, "output directory (overrides the config)");
    }
    app.get_subcommand("hash")->description("hash enrolment samples and calibrate thresholds");
    app.get_subcommand("attack")->description("generate preimages (resumable)");
    app.get_subcommand("evaluate")->description("score preimages and write the report");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    const auto* sub = app.get_subcommands().front();
    std::optional<std::size_t> jobs_opt;
    if (sub->count("--jobs") > 0)
        jobs_opt = jobs;
    std::optional<std::filesystem::path> out_opt;
    if (sub->count("--out") > 0)
        out_opt = out;
    return cbattack::run_command(sub->get_name(), config, jobs_opt, out_opt, std::cerr);
}
