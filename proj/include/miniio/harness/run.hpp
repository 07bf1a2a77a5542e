/*
 * Distributed under the OSI-approved Apache License, Version 2.0.  See
 * accompanying file Copyright.txt for details.
 *
 * run.hpp : spawns the rank processes of one run and collects their timings
 *
 * Ranks are forked processes. Each binds its message-layer listener, says
 * HELLO to the coordinator, receives the PEERS list, then streams one STEP
 * frame per completed step and a final REPORT (or FAIL). Staging runs also
 * fork a capture consumer that writes what it receives to a flat file.
 */

#ifndef MINIIO_HARNESS_RUN_HPP
#define MINIIO_HARNESS_RUN_HPP

#include "miniio/harness/report.hpp"

namespace miniio::harness
{

/// Runs cfg to completion and writes <out>/report.json and steps.csv. A
/// rank that fails or dies leaves a report with `failure` set and only the
/// steps every rank completed. Throws ConfigError before spawning anything
/// when cfg is invalid.
RunReport run(RunConfig cfg);

} // end namespace miniio::harness

#endif // MINIIO_HARNESS_RUN_HPP
