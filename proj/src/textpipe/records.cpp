// Copyright 2026 The Echo-MoE Authors
// SPDX-License-Identifier: Apache-2.0

#include "echomoe/textpipe/records.hpp"

#include <istream>
#include <ostream>

#include "echomoe/errors.hpp"
#include "echomoe/textpipe/text.hpp"

namespace echomoe::textpipe {

std::string to_string(TemplateClass c) { return c == TemplateClass::Open ? "open" : "closed"; }

TemplateClass parse_template_class(const std::string& text) {
  if (text == "open") return TemplateClass::Open;
  if (text == "closed") return TemplateClass::Closed;
  throw DataError("unknown template class '" + text + "' (expected open or closed)");
}

void to_json(nlohmann::json& j, const InstructionRecord& r) {
  j = nlohmann::json{{"id", r.id},
                     {"question", r.question},
                     {"answer", r.answer},
                     {"template_class", to_string(r.template_class)},
                     {"modality", r.modality},
                     {"source", r.source}};
}

void from_json(const nlohmann::json& j, InstructionRecord& r) {
  j.at("id").get_to(r.id);
  j.at("question").get_to(r.question);
  j.at("answer").get_to(r.answer);
  r.template_class = parse_template_class(j.value("template_class", "open"));
  r.modality = j.value("modality", "");
  r.source = j.value("source", "");
}

std::vector<InstructionRecord> read_records(std::istream& in) {
  std::vector<InstructionRecord> out;
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      InstructionRecord r = nlohmann::json::parse(line).get<InstructionRecord>();
      if (normalize(r.question).empty() || normalize(r.answer).empty()) {
        throw DataError("question and answer must contain words");
      }
      out.push_back(std::move(r));
    } catch (const nlohmann::json::exception& e) {
      throw DataError("line " + std::to_string(number) + ": " + e.what());
    } catch (const DataError& e) {
      throw DataError("line " + std::to_string(number) + ": " + e.what());
    }
  }
  return out;
}

void write_records(std::ostream& out, const std::vector<InstructionRecord>& records) {
  for (const auto& r : records) out << nlohmann::json(r).dump() << '\n';
}

InstructionRecord EchoGenerator::generate(const QuestionTemplate& tmpl, std::size_t index) {
  InstructionRecord r;
  r.id = tmpl.id + "-" + std::to_string(index);
  r.question = tmpl.question;
  r.answer = tmpl.answer;
  r.template_class = tmpl.template_class;
  r.modality = tmpl.modality;
  r.source = "template:" + tmpl.id;
  return r;
}

}  // namespace echomoe::textpipe
