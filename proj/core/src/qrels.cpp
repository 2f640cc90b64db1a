#include "refeed/qrels.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

namespace refeed {

QrelSet load_qrels(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  QrelSet qrels;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream fields(line);
    std::string qid, iteration, did, grade_str;
    if (!(fields >> qid >> iteration >> did >> grade_str)) {
      throw std::runtime_error(path.string() + ":" + std::to_string(lineno) +
                               ": expected `query_id iteration doc_id grade`");
    }
    std::string extra;
    if (fields >> extra) {
      throw std::runtime_error(path.string() + ":" + std::to_string(lineno) +
                               ": trailing field '" + extra + "'");
    }
    int grade;
    try {
      std::size_t consumed = 0;
      grade = std::stoi(grade_str, &consumed);
      if (consumed != grade_str.size()) throw std::invalid_argument(grade_str);
    } catch (const std::exception&) {
      throw std::runtime_error(path.string() + ":" + std::to_string(lineno) + ": bad grade '" +
                               grade_str + "'");
    }
    if (grade < 0) {
      throw std::runtime_error(path.string() + ":" + std::to_string(lineno) +
                               ": negative grade " + grade_str);
    }
    qrels.grades[qid][did] = grade;
  }
  return qrels;
}

std::string qrels_text(const QrelSet& qrels) {
  std::string out;
  for (const auto& [qid, docs] : qrels.grades) {
    for (const auto& [did, grade] : docs) {
      out += qid;
      out += " 0 ";
      out += did;
      out += ' ';
      out += std::to_string(grade);
      out += '\n';
    }
  }
  return out;
}

}  // namespace refeed
