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

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "pagerag/corpus.hpp"

namespace pagerag::trace {

using Payload = nlohmann::ordered_json;

/// Declaration order is the canonical event order.
enum class Stage { Plan, Route, Rewrite, Retrieve, Judge, Answer, Synthesize, Warning, Degraded };

std::string_view to_string(Stage stage);
Stage parse_stage(std::string_view s);

struct StageEvent {
    Stage stage = Stage::Plan;
    std::optional<int> subq_index;
    Payload payload = Payload::object();
};

struct Citation {
    std::string doc_id;
    int page_index = 0;
    std::int64_t page_id = 0;
    std::string image_uri;

    bool operator==(const Citation&) const = default;
};

struct FinalAnswer {
    std::string text;
    std::vector<Citation> citations;
    std::string trace_id;
};

enum class Outcome { Running, Completed, Failed };
std::string_view to_string(Outcome outcome);

class TraceError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

/// Append-only audit record of one pipeline run. Events are sorted by
/// (stage, subq_index) on finalize; ties keep insertion order.
class ProcessTrace {
public:
    ProcessTrace() = default;
    ProcessTrace(std::string trace_id, std::string original_query, Payload config, std::string started_at);

    void append(StageEvent event);
    void finalize(Outcome outcome, std::string finished_at);
    bool finalized() const noexcept { return outcome_ != Outcome::Running; }

    const std::string& trace_id() const noexcept { return trace_id_; }
    const std::string& original_query() const noexcept { return original_query_; }
    const Payload& config() const noexcept { return config_; }
    const std::vector<StageEvent>& events() const noexcept { return events_; }
    Outcome outcome() const noexcept { return outcome_; }
    const std::string& started_at() const noexcept { return started_at_; }
    const std::string& finished_at() const noexcept { return finished_at_; }

    const std::optional<FinalAnswer>& final_answer() const noexcept { return final_answer_; }
    void set_final_answer(FinalAnswer answer);
    const std::string& error() const noexcept { return error_; }
    void set_error(std::string error) { error_ = std::move(error); }
    const std::map<std::string, int>& provider_calls() const noexcept { return provider_calls_; }
    void set_provider_calls(std::map<std::string, int> calls) { provider_calls_ = std::move(calls); }

    /// Events matching a stage, optionally restricted to one subquestion.
    std::vector<const StageEvent*> find(Stage stage, std::optional<int> subq_index = std::nullopt) const;

private:
    friend ProcessTrace parse_trace(std::string_view text);

    std::string trace_id_;
    std::string original_query_;
    Payload config_ = Payload::object();
    std::vector<StageEvent> events_;
    std::string started_at_;
    std::string finished_at_;
    Outcome outcome_ = Outcome::Running;
    std::optional<FinalAnswer> final_answer_;
    std::string error_;
    std::map<std::string, int> provider_calls_;
};

std::string serialize_trace(const ProcessTrace& trace);
ProcessTrace parse_trace(std::string_view text);

struct TraceIssue {
    std::optional<int> subq_index;
    std::string message;
};

/// Checks ordering, stage completeness and cross-references against the
/// manifest. Empty result means the trace is consistent.
std::vector<TraceIssue> validate_trace(const ProcessTrace& trace, const corpus::Manifest& manifest);

struct TraceSummary {
    std::string trace_id;
    std::string query;
    std::string started_at;
    std::string outcome;
    std::int64_t sequence = 0;
};

/// Directory of <trace_id>.json files plus index.json. Safe for concurrent use.
class TraceStore {
public:
    explicit TraceStore(std::filesystem::path dir);

    void save(const ProcessTrace& trace);
    std::optional<std::string> read_raw(const std::string& trace_id) const;
    /// Newest first.
    std::vector<TraceSummary> list() const;
    const std::filesystem::path& dir() const noexcept { return dir_; }

private:
    std::filesystem::path dir_;
    mutable std::mutex mutex_;
};

}  // namespace pagerag::trace
