#include <doctest.h>

#include "recourse/csv.hpp"
#include "recourse/error.hpp"

using namespace recourse;

TEST_CASE("csv: quoted fields, escaped quotes and CRLF") {
  const auto doc = csv::parse("a,b\r\n\"x, y\",\"say \"\"hi\"\"\"\r\n1,2\r\n");
  REQUIRE(doc.header == std::vector<std::string>{"a", "b"});
  REQUIRE(doc.records.size() == 2);
  CHECK(doc.records[0][0] == "x, y");
  CHECK(doc.records[0][1] == "say \"hi\"");
  CHECK(doc.lines == std::vector<std::size_t>{2, 3});
}

TEST_CASE("csv: newline inside quotes keeps line numbers honest") {
  const auto doc = csv::parse("a,b\n\"multi\nline\",1\n2,3\n");
  REQUIRE(doc.records.size() == 2);
  CHECK(doc.records[0][0] == "multi\nline");
  CHECK(doc.lines[1] == 4);
}

TEST_CASE("csv: errors") {
  CHECK_THROWS_WITH_AS(csv::parse(""), "empty file", ParseError);
  CHECK_THROWS_WITH_AS(csv::parse("a,b\n1,2\n3\n"), "line 3: expected 2 fields, found 1", ParseError);
  CHECK_THROWS_AS(csv::parse("a\n\"open\n"), ParseError);
  CHECK_THROWS_WITH_AS(csv::read_file("/nonexistent/x.csv"), "file not found: /nonexistent/x.csv", ParseError);
}

TEST_CASE("csv: format_row quotes only when needed and round-trips") {
  const std::vector<std::string> fields{"plain", "with,comma", "with \"quote\"", ""};
  const std::string line = csv::format_row(fields);
  CHECK(line == "plain,\"with,comma\",\"with \"\"quote\"\"\",");
  const auto doc = csv::parse("a,b,c,d\n" + line + "\n");
  CHECK(doc.records[0] == fields);
}
