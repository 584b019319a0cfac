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

#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <string_view>

namespace pagerag {

class PromptError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A system/user template pair. Placeholders are written {{name}}.
struct PromptTemplate {
    std::string system;
    std::string user;
};

/// Prompt assets, one pair of <stage>.system.txt / <stage>.user.txt files
/// per stage: planner, router, rewriter, judge, answer_rag, answer_direct,
/// synthesis, grader.
struct PromptSet {
    PromptTemplate planner;
    PromptTemplate router;
    PromptTemplate rewriter;
    PromptTemplate judge;
    PromptTemplate answer_rag;
    PromptTemplate answer_direct;
    PromptTemplate synthesis;
    PromptTemplate grader;

    static PromptSet load(const std::filesystem::path& dir);
};

/// Substitutes every {{name}}; an unknown placeholder is an error.
std::string render_template(std::string_view tmpl, const std::map<std::string, std::string>& vars);

}  // namespace pagerag
