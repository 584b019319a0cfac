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

#include "pagerag/prompts.hpp"

#include "pagerag/util.hpp"

namespace pagerag {

PromptSet PromptSet::load(const std::filesystem::path& dir) {
    auto read_pair = [&dir](const char* stage) {
        PromptTemplate t;
        for (auto [suffix, target] : {std::pair{".system.txt", &t.system}, std::pair{".user.txt", &t.user}}) {
            const auto path = dir / (std::string(stage) + suffix);
            if (!std::filesystem::is_regular_file(path)) throw PromptError("missing prompt asset " + path.string());
            *target = read_file(path);
            while (!target->empty() && target->back() == '\n') target->pop_back();
        }
        return t;
    };
    PromptSet p;
    p.planner = read_pair("planner");
    p.router = read_pair("router");
    p.rewriter = read_pair("rewriter");
    p.judge = read_pair("judge");
    p.answer_rag = read_pair("answer_rag");
    p.answer_direct = read_pair("answer_direct");
    p.synthesis = read_pair("synthesis");
    p.grader = read_pair("grader");
    return p;
}

std::string render_template(std::string_view tmpl, const std::map<std::string, std::string>& vars) {
    std::string out;
    out.reserve(tmpl.size());
    std::size_t pos = 0;
    while (pos < tmpl.size()) {
        const auto open = tmpl.find("{{", pos);
        if (open == std::string_view::npos) {
            out.append(tmpl.substr(pos));
            break;
        }
        const auto close = tmpl.find("}}", open + 2);
        if (close == std::string_view::npos) throw PromptError("unterminated placeholder in prompt template");
        out.append(tmpl.substr(pos, open - pos));
        const std::string name = trim(tmpl.substr(open + 2, close - open - 2));
        auto it = vars.find(name);
        if (it == vars.end()) throw PromptError("unknown prompt placeholder {{" + name + "}}");
        out.append(it->second);
        pos = close + 2;
    }
    return out;
}

}  // namespace pagerag
