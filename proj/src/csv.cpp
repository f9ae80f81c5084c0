#include "enopt/csv.hpp"

#include <charconv>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <system_error>

namespace enopt {

std::string format_double(double value) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), value);
  if (res.ec != std::errc{}) {
    throw CsvError("format_double: conversion failed");
  }
  return {buf, res.ptr};
}

double parse_double(std::string_view text) {
  while (!text.empty() && (text.front() == ' ' || text.front() == '\t')) {
    text.remove_prefix(1);
  }
  while (!text.empty() && (text.back() == ' ' || text.back() == '\t' || text.back() == '\r')) {
    text.remove_suffix(1);
  }
  if (!text.empty() && text.front() == '+') {
    text.remove_prefix(1);
  }
  double value = 0.0;
  const auto res = std::from_chars(text.data(), text.data() + text.size(), value);
  if (res.ec != std::errc{} || res.ptr != text.data() + text.size()) {
    throw CsvError("not a number: '" + std::string(text) + "'");
  }
  return value;
}

namespace {

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  std::istringstream ss(line);
  while (std::getline(ss, field, ',')) {
    if (!field.empty() && field.back() == '\r') {
      field.pop_back();
    }
    fields.push_back(field);
  }
  if (!line.empty() && line.back() == ',') {
    fields.emplace_back();
  }
  return fields;
}

bool blank(const std::string& line) {
  return line.find_first_not_of(" \t\r") == std::string::npos;
}

std::ifstream open_input(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw CsvError("cannot open '" + path + "'");
  }
  return in;
}

}  // namespace

CsvTable read_csv(std::istream& in) {
  CsvTable table;
  std::string line;
  std::size_t line_no = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (blank(line)) {
      continue;
    }
    auto fields = split_fields(line);
    if (!have_header) {
      table.header = std::move(fields);
      have_header = true;
      continue;
    }
    if (fields.size() != table.header.size()) {
      throw CsvError("line " + std::to_string(line_no) + ": expected " +
                     std::to_string(table.header.size()) + " fields, found " +
                     std::to_string(fields.size()));
    }
    table.rows.push_back(std::move(fields));
  }
  if (!have_header) {
    throw CsvError("empty CSV input");
  }
  return table;
}

void write_csv_row(std::ostream& out, const std::vector<std::string>& fields) {
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i > 0) {
      out << ',';
    }
    out << fields[i];
  }
  out << '\n';
}

Matrix read_numeric_csv(std::istream& in) {
  const CsvTable table = read_csv(in);
  Matrix out(static_cast<Index>(table.rows.size()), static_cast<Index>(table.header.size()));
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    for (std::size_t c = 0; c < table.header.size(); ++c) {
      try {
        out(static_cast<Index>(r), static_cast<Index>(c)) = parse_double(table.rows[r][c]);
      } catch (const CsvError& err) {
        throw CsvError("row " + std::to_string(r + 1) + ", column '" + table.header[c] +
                       "': " + err.what());
      }
    }
  }
  return out;
}

Matrix read_numeric_csv(const std::string& path) {
  auto in = open_input(path);
  try {
    return read_numeric_csv(in);
  } catch (const CsvError& err) {
    throw CsvError(path + ": " + err.what());
  }
}

void write_numeric_csv(std::ostream& out, const std::vector<std::string>& header,
                       const Matrix& rows) {
  write_csv_row(out, header);
  std::vector<std::string> fields(static_cast<std::size_t>(rows.cols()));
  for (Index r = 0; r < rows.rows(); ++r) {
    for (Index c = 0; c < rows.cols(); ++c) {
      fields[static_cast<std::size_t>(c)] = format_double(rows(r, c));
    }
    write_csv_row(out, fields);
  }
}

Matrix read_ensemble_csv(std::istream& in) {
  std::string text{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  std::istringstream body(text);
  CsvTable header_only;
  {
    std::istringstream probe(text);
    header_only = read_csv(probe);
  }
  for (std::size_t i = 0; i < header_only.header.size(); ++i) {
    if (header_only.header[i] != "dim_" + std::to_string(i)) {
      throw CsvError("ensemble header field " + std::to_string(i) + " is '" +
                     header_only.header[i] + "', expected 'dim_" + std::to_string(i) + "'");
    }
  }
  const Matrix rows = read_numeric_csv(body);
  if (rows.rows() < 1) {
    throw CsvError("ensemble file has no members");
  }
  return rows.transpose();
}

Matrix read_ensemble_csv(const std::string& path) {
  auto in = open_input(path);
  try {
    return read_ensemble_csv(in);
  } catch (const CsvError& err) {
    throw CsvError(path + ": " + err.what());
  }
}

void write_ensemble_csv(std::ostream& out, const Matrix& members) {
  std::vector<std::string> header;
  for (Index i = 0; i < members.rows(); ++i) {
    header.push_back("dim_" + std::to_string(i));
  }
  write_numeric_csv(out, header, members.transpose());
}

}  // namespace enopt
