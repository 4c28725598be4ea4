// Copyright 2026 The EviSearch Authors
// SPDX-License-Identifier: Apache-2.0
#include "support.hpp"

#include <doctest.h>

#include <cstdio>
#include <sys/wait.h>

#ifndef EVISEARCH_CLI_PATH
#error "EVISEARCH_CLI_PATH must name the CLI binary"
#endif

namespace {

struct Result {
  int status = -1;
  std::string out;
};

Result run(const std::string& args) {
  const std::string cmd = std::string("'") + EVISEARCH_CLI_PATH + "' " + args + " 2>/dev/null";
  Result r;
  FILE* pipe = ::popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  char buf[4096];
  std::size_t n;
  while ((n = std::fread(buf, 1, sizeof(buf), pipe)) > 0) r.out.append(buf, n);
  const int raw = ::pclose(pipe);
  r.status = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
  return r;
}

std::string q(const std::filesystem::path& p) { return "'" + p.string() + "'"; }

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("extract, evaluate and export from the command line") {
  testsupport::TempDir dir;
  const auto store = dir / "store";
  auto r = run("extract -c " + q(testsupport::fixture("config_mock.json")) + " -o " + q(store));
  CHECK(r.status == 0);
  CHECK(r.out.find("ok      synthetic-arise3") != std::string::npos);
  CHECK(std::filesystem::exists(store / "synthetic-arise3" / "runs" / "v0001" / "cells.json"));

  r = run("evaluate --run " + q(store / "synthetic-arise3") + " --gold " + q(testsupport::fixture("synthetic_gold.json")) +
          " --schema " + q(testsupport::fixture("schema_20.json")) + " -o " + q(dir / "eval"));
  CHECK(r.status == 0);
  CHECK(r.out.find("Method,Numeric Corr.") != std::string::npos);
  CHECK(r.out.find("Method,Text,Table,Figure") != std::string::npos);
  CHECK(std::filesystem::exists(dir / "eval" / "report.json"));

  r = run("export-supervision --store " + q(store) + " -o " + q(dir / "sup.jsonl"));
  CHECK(r.status == 0);
  const auto sup = testsupport::read_file(dir / "sup.jsonl");
  CHECK(std::count(sup.begin(), sup.end(), '\n') >= 1);
}

TEST_CASE("error exits") {
  testsupport::TempDir dir;
  CHECK(run("").status != 0);
  CHECK(run("frobnicate").status != 0);
  CHECK(run("extract --schema " + q(dir / "none.json") + " --doc " + q(testsupport::fixture("synthetic_doc.json")) +
            " -o " + q(dir / "s")).status == 2);
  CHECK_FALSE(std::filesystem::exists(dir / "s"));

  testsupport::write_file(dir / "bad.json", "[");
  const auto r = run("extract -c " + q(testsupport::fixture("config_mock.json")) + " --doc " +
                     q(testsupport::fixture("synthetic_doc.json")) + " --doc " + q(dir / "bad.json") + " -o " +
                     q(dir / "s2"));
  CHECK(r.status == 1);
  CHECK(r.out.find("FAILED") != std::string::npos);
  CHECK(r.out.find("2 document(s), 1 failed") != std::string::npos);
}

}  // TEST_SUITE
