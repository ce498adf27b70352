#!/usr/bin/env python3

#Released under the MIT license, see LICENSE.txt

""" privstream command line: leakage reports, synthetic datasets, accuracy
experiments (as a Toil workflow), end-to-end epochs, throughput benchmarks and
the live server / data owner / coordinator roles.

Exit codes: 0 on success, 1 for invalid input, 2 for protocol or runtime errors.
"""
import os
import sys
import threading
import timeit
from argparse import ArgumentParser, ArgumentTypeError

from toil.job import Job
from toil.common import Toil
from toil.statsAndLogging import logger
from toil.statsAndLogging import add_logging_options
from toil.statsAndLogging import set_logging_from_options

from privstream.dpf.dpf import TableGeometry
from privstream.epoch.epoch_state import ServerConfig
from privstream.epoch.slots import collision_probability, expected_collisions, surplus_writes, deployment_plan
from privstream.epoch.write_table import tally_write_table
from privstream.harness.accuracy_workflow import accuracy_workflow
from privstream.harness.bench import run_throughput_bench, rows_scaling
from privstream.harness.e2e import run_e2e, BACKENDS
from privstream.harness.experiment import MODES, VEHICLE, format_leakage_report, leakage_sweep_csv
from privstream.harness.experiment import run_leakage_report
from privstream.harness.synthetic import SCENARIOS, synth_dataset, scenario_dataset, ingest_csv, export_csv
from privstream.rr.randomized_response import PrivacyParams, estimate_counts
from privstream.shared.common import defaultConfigPath, enableDumpStack, makeURL, make_rng
from privstream.shared.configWrapper import ConfigWrapper
from privstream.shared.errors import PrivstreamError, ValidationError, ProtocolError
from privstream.shared.version import privstream_commit
from privstream.transport.client import parse_endpoints, client_submit, submit_dummy, announce_query, fetch_query
from privstream.transport.client import send_close, fetch_result, QueryRegistry
from privstream.transport.server import AggregationServer
from privstream.transport.wire import QueryAnnounce, encode_query, decode_query, owner_fingerprint

def check_positive_float(value):
    """ argparse type for a positive number """
    fValue = float(value)
    if fValue <= 0:
        raise ArgumentTypeError("{} is an invalid positive number".format(value))
    return fValue

def check_nonnegative_int(value):
    iValue = int(value)
    if iValue < 0:
        raise ArgumentTypeError("{} is an invalid nonnegative integer".format(value))
    return iValue

def float_list(value):
    try:
        return [float(v) for v in value.split(',') if v.strip()]
    except ValueError:
        raise ArgumentTypeError("{} is not a comma separated list of numbers".format(value))

def _write_output(text, out):
    """ text to the --out file, or stdout """
    if out:
        dirName = os.path.dirname(out)
        if dirName and not os.path.isdir(dirName):
            os.makedirs(dirName)
        with open(out, 'w') as outFile:
            outFile.write(text)
        logger.info("Wrote {}".format(out))
    else:
        sys.stdout.write(text if text.endswith('\n') else text + '\n')

def _params(options, config):
    p = options.p if options.p is not None else config.getP()
    q = options.q if options.q is not None else config.getQ()
    return PrivacyParams(p, q)

def _geometry(options, config):
    rows = options.rows if options.rows is not None else config.getRows()
    messageBytes = options.message_bytes if options.message_bytes is not None else config.getMessageBytes()
    return TableGeometry(rows, messageBytes, config.getMaxTableBytes())

def _servers(options, config):
    if options.servers:
        return parse_endpoints(options.servers)
    portBase = config.getPortBase()
    return [('127.0.0.1', portBase + i) for i in range(options.parties)]

def _read_query(path):
    with open(path, 'rb') as inFile:
        return decode_query(inFile.read())

# subcommands

def leakage_cmd(options, config):
    p = options.p if options.p is not None else config.getP()
    q = options.q if options.q is not None else config.getQ()
    pi = options.pi_a if options.pi_a is not None else config.getPiA()
    report = run_leakage_report((p, q), pi)
    if options.out:
        _write_output(leakage_sweep_csv([p], [q], pi), options.out)
    print(format_leakage_report(report))

def sweep_cmd(options, config):
    pi = options.pi_a if options.pi_a is not None else config.getPiA()
    _write_output(leakage_sweep_csv(options.ps, options.qs, pi), options.out)

def synth_cmd(options, config):
    rng = make_rng(options.seed)
    if options.scenario == 'custom':
        params = config.getSyntheticParams()
        dataset = synth_dataset(options.stations or params['stations'], options.total or params['total_vehicles'],
                                options.max or params['max_per_station'],
                                options.min if options.min is not None else params['min_per_station'],
                                rng, options.shape or params['shape'])
    else:
        dataset = scenario_dataset(options.scenario, config, rng)
    if options.out:
        export_csv(dataset, options.out)
    logger.info("{}".format(dataset))
    print("{}: {} stations, {} vehicles, counts in [{}, {}]".format(
        dataset.scenario_label, len(dataset), dataset.total_vehicles, dataset.counts.min(), dataset.counts.max()))

def accuracy_cmd(options, config):
    params = _params(options, config)
    firstSeed = options.seed if options.seed is not None else 0
    seeds = [firstSeed + i for i in range(options.replicates)]
    scenarios = list(options.scenarios)
    outDir = options.out or os.getcwd()
    if not os.path.isdir(outDir):
        os.makedirs(outDir)
    with Toil(options) as toil:
        if options.restart:
            output = toil.restart()
        else:
            csv_ids = {}
            for spec in options.csv or []:
                label, sep, path = spec.partition('=')
                if not sep:
                    raise ValidationError("--csv takes label=path, got {}".format(spec))
                logger.info("Importing {}".format(path))
                csv_ids[label] = toil.importFile(makeURL(path))
                scenarios.append(label)
            output = toil.start(Job.wrapJobFn(accuracy_workflow, config, params, scenarios, seeds, options.trials,
                                              options.mode, csv_ids))
        toil.exportFile(output['summary'], makeURL(os.path.join(outDir, 'summary.csv')))
        for name, file_id in output['experiments'].items():
            toil.exportFile(file_id, makeURL(os.path.join(outDir, name + '.csv')))
    for row in output['rows']:
        print("{:<28} {:>6} stations  avg rel err {: .6f}  avg |rel err| {:.6f}  avg RMSE {:.6f}".format(
            "{} (seed {})".format(row['Scenario'], row['Seed']), row['# Stations'], row['Avg Relative Error'],
            row['Avg Abs Relative Error'], row['Avg RMSE']))

def e2e_cmd(options, config):
    result = run_e2e(options.clients, options.rows or config.getRows(), options.parties, _params(options, config),
                     options.seed, options.backend, options.attributes, audit_mode=options.audit,
                     timeout_ms=config.getPeerTimeoutMs())
    if len(set(t.to_bytes() for t in result.tables)) != 1:
        raise ProtocolError("The servers' finalized tables do not match")
    lines = ['bits,count']
    counts = {}
    for bits in result.decoded:
        counts[bits] = counts.get(bits, 0) + 1
    for bits in sorted(counts):
        lines.append('{},{}'.format(''.join(str(b) for b in bits), counts[bits]))
    if options.out:
        _write_output('\n'.join(lines) + '\n', options.out)
    print("{} backend: {} clients, {} decoded answers, {} refused, {} servers agree".format(
        options.backend, options.clients, len(result.decoded), result.rejected, len(result.tables)))

def bench_cmd(options, config):
    params = config.getBenchParams()
    rows = options.rows or params['rows']
    parties = options.parties or params['parties']
    messageBytes = options.message_bytes or params['message_bytes']
    lines = []
    if options.scaling:
        lines.append('rows,seconds_per_write,ratio_to_previous')
        for point in rows_scaling(parties=parties, message_bytes=messageBytes, seed=options.seed):
            lines.append('{},{!r},{}'.format(point.rows, point.seconds_per_write,
                                             '' if point.ratio_to_previous is None else repr(point.ratio_to_previous)))
    else:
        clients = options.clients if options.clients is not None else params['clients']
        report = run_throughput_bench(rows, parties, clients, options.duration or params['duration'], messageBytes,
                                      options.seed)
        lines.append(','.join(report._fields))
        lines.append(','.join(repr(v) if isinstance(v, float) else str(v) for v in report))
        logger.info("{:.2f} writes/s ({} rows x {} bytes, {} parties)".format(report.writes_per_second, rows,
                                                                            messageBytes, parties))
    _write_output('\n'.join(lines) + '\n', options.out)

def serve_cmd(options, config):
    servers = _servers(options, config)
    auditMode = options.audit or config.getAuditMode()
    serverConfig = ServerConfig(options.server_id, servers, _geometry(options, config),
                                options.epoch_ms or config.getEpochMs(), config.getPeerTimeoutMs(), auditMode,
                                options.dummy_policy or config.getDummyPolicy(), options.manual_epochs,
                                parse_endpoints(options.listen)[0] if options.listen else None, options.out)
    query = _read_query(options.query_file) if options.query_file else None
    server = AggregationServer(serverConfig, query=query)
    stop = threading.Event()
    with server:
        try:
            stop.wait(options.lifetime if options.lifetime else None)
        except KeyboardInterrupt:
            logger.info("Interrupted, shutting down server {}".format(options.server_id))

def query_cmd(options, config):
    labels = [l.strip() for l in options.labels.split(',') if l.strip()]
    geometry = _geometry(options, config)
    params = _params(options, config)
    signature = b''
    if options.signature_file:
        with open(options.signature_file, 'rb') as inFile:
            signature = inFile.read()
    query = QueryAnnounce(options.query_id, labels, geometry.rows, geometry.message_bytes, params.p, params.q,
                          options.epoch_ms or config.getEpochMs(), signature).validate()
    if options.out:
        with open(options.out, 'wb') as outFile:
            outFile.write(encode_query(query))
    if options.servers:
        announce_query(parse_endpoints(options.servers), query)
    print("query {}: {} attributes, {} rows x {} bytes".format(query.query_id, query.attributes, query.rows,
                                                            query.message_bytes))

def client_cmd(options, config):
    servers = _servers(options, config)
    if options.query_file:
        query, epochId = _read_query(options.query_file), options.epoch
    else:
        query, current = fetch_query(servers[0])
        epochId = options.epoch if options.epoch is not None else (current if options.manual_epochs else None)
    ownerId = None
    if options.owner_cert:
        with open(options.owner_cert, 'rb') as inFile:
            ownerId = owner_fingerprint(inFile.read())
    rng = make_rng(options.seed) if options.seed is not None else None
    if options.dummy:
        result = submit_dummy(query, servers, rng, ownerId, epochId)
    else:
        if options.truth:
            truth = [int(b) for b in options.truth.split(',')]
        elif options.station:
            if options.station not in query.attribute_labels:
                raise ValidationError("Station {} is not one of the query's attributes".format(options.station))
            truth = [1 if l == options.station else 0 for l in query.attribute_labels]
        else:
            raise ValidationError("Give --truth, --station or --dummy")
        result = client_submit(query, truth, servers, rng, ownerId, epochId, QueryRegistry())
    print("wrote to epoch {} on {} servers".format(result.epoch_id, len(result.acks)))

def close_cmd(options, config):
    servers = _servers(options, config)
    query = _read_query(options.query_file) if options.query_file else fetch_query(servers[0])[0]
    geometry = TableGeometry(query.rows, query.message_bytes, config.getMaxTableBytes())
    if not options.no_close:
        send_close(servers, options.epoch)
    tables = [fetch_result(e, options.epoch, geometry, wait=options.wait) for e in servers]
    if len(set(t.to_bytes() for t in tables)) != 1:
        raise ProtocolError("The servers' finalized tables for epoch {} do not match".format(options.epoch))
    if options.out:
        tables[0].save(options.out)
    tally = tally_write_table(tables[0], query.attributes)
    lines = ['station,raw_yes,estimate']
    if tally.respondents:
        estimates = estimate_counts(tally.raw_yes_counts, tally.respondents, PrivacyParams(query.p, query.q))
        for label, raw, estimate in zip(query.attribute_labels, tally.raw_yes_counts, estimates):
            lines.append('{},{},{!r}'.format(label, raw, float(estimate)))
    print('\n'.join(lines))
    logger.info("Epoch {}: {} respondents, {} undecodable rows".format(options.epoch, tally.respondents,
                                                                      tally.undecodable_rows))

def ingest_cmd(options, config):
    dataset = ingest_csv(options.path)
    if options.out:
        export_csv(dataset, options.out)
    print("{}: {} stations, {} vehicles".format(dataset.scenario_label, len(dataset), dataset.total_vehicles))

def plan_cmd(options, config):
    rows = options.rows or config.getRows()
    plan = deployment_plan(options.owners, rows, options.cluster_size, options.window)
    writers = options.writers if options.writers is not None else min(options.owners, rows)
    lines = [
        "clusters                {}".format(plan.clusters),
        "servers                 {}".format(plan.servers),
        "writes per cluster      {:g}".format(plan.writes_per_cluster),
        "writers per table       {}".format(writers),
        "collision probability   {:.6f}".format(collision_probability(writers, rows)),
        "expected collisions     {:.3f}".format(expected_collisions(writers, rows)),
        "surplus writes          {:.3f}".format(surplus_writes(writers, rows)),
    ]
    _write_output('\n'.join(lines) + '\n', options.out)

# parser

def _common(sub, toil=False):
    if toil:
        Job.Runner.addToilOptions(sub)
    else:
        add_logging_options(sub)
    sub.add_argument("--configFile", dest="configFile", default=defaultConfigPath(),
                     help="Specify privstream configuration file")
    sub.add_argument("--seed", type=int, default=None, help="Random seed (fresh OS entropy if omitted)")
    sub.add_argument("--out", default=None, help="Output file (directory for accuracy / serve)")

def _privacy(sub):
    sub.add_argument("--p", type=float, default=None, help="First coin bias [default from config]")
    sub.add_argument("--q", type=float, default=None, help="Second coin bias [default from config]")

def _geometryArgs(sub):
    sub.add_argument("--rows", type=int, default=None, help="Write table rows [default from config]")
    sub.add_argument("--message-bytes", dest="message_bytes", type=int, default=None,
                     help="Bytes per table cell [default from config]")

def _serverArgs(sub):
    sub.add_argument("--servers", "--peers", dest="servers", default=None,
                     help="Comma separated host:port of every server, own entry included, in server id order "
                     "[default: localhost from the config / PRIVSTREAM_PORT_BASE port base]")
    sub.add_argument("--parties", type=int, default=2, help="Number of servers when --servers is not given")

def build_parser():
    parser = ArgumentParser(description="Privacy-preserving stream analytics with anonymous randomized responses")
    subparsers = parser.add_subparsers(dest="command")
    subparsers.required = True

    sub = subparsers.add_parser("leakage", help="Posterior leakage and epsilon for one parameter set")
    _common(sub)
    sub.add_argument("p", type=float, nargs='?', default=None)
    sub.add_argument("q", type=float, nargs='?', default=None)
    sub.add_argument("pi_a", type=float, nargs='?', default=None)
    sub.set_defaults(func=leakage_cmd)

    sub = subparsers.add_parser("sweep", help="Leakage over a grid of coin biases, as CSV")
    _common(sub)
    sub.add_argument("--ps", type=float_list, default=[0.5, 0.75, 0.9, 0.95, 0.99, 0.995])
    sub.add_argument("--qs", type=float_list, default=[0.5, 0.9, 0.99, 0.999])
    sub.add_argument("--pi-a", dest="pi_a", type=float, default=None)
    sub.set_defaults(func=sweep_cmd)

    sub = subparsers.add_parser("synth", help="Generate a synthetic station dataset")
    _common(sub)
    sub.add_argument("--scenario", choices=list(SCENARIOS) + ['custom'], default=SCENARIOS[0])
    sub.add_argument("--stations", type=int, default=None)
    sub.add_argument("--total", type=int, default=None)
    sub.add_argument("--max", type=int, default=None)
    sub.add_argument("--min", type=int, default=None)
    sub.add_argument("--shape", type=check_positive_float, default=None)
    sub.set_defaults(func=synth_cmd)

    sub = subparsers.add_parser("accuracy", help="Accuracy experiments as a Toil workflow")
    _common(sub, toil=True)
    _privacy(sub)
    sub.add_argument("--scenarios", nargs='*', choices=SCENARIOS, default=list(SCENARIOS))
    sub.add_argument("--replicates", type=int, default=5, help="Seeds per scenario, counting up from --seed")
    sub.add_argument("--trials", type=int, default=1, help="Randomized response trials per experiment")
    sub.add_argument("--mode", choices=MODES, default=VEHICLE)
    sub.add_argument("--csv", action='append', help="Extra label=path station CSV to run as a scenario")
    sub.set_defaults(func=accuracy_cmd)

    sub = subparsers.add_parser("e2e", help="One epoch end to end, in process or over live local servers")
    _common(sub)
    _privacy(sub)
    sub.add_argument("--clients", type=check_nonnegative_int, default=100)
    sub.add_argument("--rows", type=int, default=None)
    sub.add_argument("--parties", type=int, default=2)
    sub.add_argument("--attributes", type=int, default=8)
    sub.add_argument("--backend", choices=BACKENDS, default=BACKENDS[0])
    sub.add_argument("--audit", choices=ConfigWrapper.auditModes, default='off')
    sub.set_defaults(func=e2e_cmd)

    sub = subparsers.add_parser("bench", help="Write throughput")
    _common(sub)
    sub.add_argument("--rows", type=int, default=None)
    sub.add_argument("--parties", type=int, default=None)
    sub.add_argument("--clients", type=check_nonnegative_int, default=None)
    sub.add_argument("--duration", type=check_positive_float, default=None)
    sub.add_argument("--message-bytes", dest="message_bytes", type=int, default=None)
    sub.add_argument("--scaling", action="store_true", help="Measure per-write cost at 256 to 2048 rows instead")
    sub.set_defaults(func=bench_cmd)

    sub = subparsers.add_parser("serve", help="Run one aggregation server")
    _common(sub)
    _geometryArgs(sub)
    _serverArgs(sub)
    sub.add_argument("--server-id", dest="server_id", type=int, required=True)
    sub.add_argument("--listen", default=None, help="host:port to bind [default: own entry of --servers]")
    sub.add_argument("--epoch-ms", dest="epoch_ms", type=int, default=None)
    sub.add_argument("--audit", choices=ConfigWrapper.auditModes, default=None)
    sub.add_argument("--dummy-policy", dest="dummy_policy", choices=ConfigWrapper.dummyPolicies, default=None)
    sub.add_argument("--manual-epochs", dest="manual_epochs", action="store_true",
                     help="Advance epochs on EPOCH_CLOSE from a coordinator instead of the clock")
    sub.add_argument("--query-file", dest="query_file", default=None)
    sub.add_argument("--lifetime", type=check_positive_float, default=None, help="Stop after this many seconds")
    sub.set_defaults(func=serve_cmd)

    sub = subparsers.add_parser("query", help="Write a query announcement and optionally send it to the servers")
    _common(sub)
    _privacy(sub)
    _geometryArgs(sub)
    sub.add_argument("--servers", default=None)
    sub.add_argument("--query-id", dest="query_id", type=int, default=1)
    sub.add_argument("--labels", required=True, help="Comma separated attribute (station) labels")
    sub.add_argument("--epoch-ms", dest="epoch_ms", type=int, default=None)
    sub.add_argument("--signature-file", dest="signature_file", default=None)
    sub.set_defaults(func=query_cmd)

    sub = subparsers.add_parser("client", help="Answer a query as one data owner")
    _common(sub)
    _serverArgs(sub)
    sub.add_argument("--query-file", dest="query_file", default=None,
                     help="Query announcement [default: fetched from the first server]")
    sub.add_argument("--truth", default=None, help="Comma separated 0/1 per attribute")
    sub.add_argument("--station", default=None, help="Answer yes for this attribute only")
    sub.add_argument("--dummy", action="store_true", help="Send a dummy write")
    sub.add_argument("--epoch", type=int, default=None)
    sub.add_argument("--manual-epochs", dest="manual_epochs", action="store_true",
                     help="Use the servers' current epoch rather than the clock")
    sub.add_argument("--owner-cert", dest="owner_cert", default=None, help="Certificate whose hash is the owner id")
    sub.set_defaults(func=client_cmd)

    sub = subparsers.add_parser("close", help="Close an epoch (manual epochs) and tally its table")
    _common(sub)
    _serverArgs(sub)
    sub.add_argument("--epoch", type=int, required=True)
    sub.add_argument("--query-file", dest="query_file", default=None)
    sub.add_argument("--wait", type=float, default=10.0, help="Seconds to wait for finalization")
    sub.add_argument("--no-close", dest="no_close", action="store_true", help="Only fetch the finalized tables")
    sub.set_defaults(func=close_cmd)

    sub = subparsers.add_parser("ingest", help="Check and normalize a station_id,count CSV")
    _common(sub)
    sub.add_argument("path")
    sub.set_defaults(func=ingest_cmd)

    sub = subparsers.add_parser("plan", help="Collision odds and cluster count for a deployment")
    _common(sub)
    sub.add_argument("--owners", type=check_nonnegative_int, default=220000)
    sub.add_argument("--rows", type=int, default=None)
    sub.add_argument("--cluster-size", dest="cluster_size", type=int, default=10)
    sub.add_argument("--window", type=check_positive_float, default=1.0, help="Seconds every owner gets to write")
    sub.add_argument("--writers", type=check_nonnegative_int, default=None,
                     help="Writers per table for the collision figures [default: min(owners, rows)]")
    sub.set_defaults(func=plan_cmd)
    return parser

def main(argv=None):
    parser = build_parser()
    options = parser.parse_args(argv)

    set_logging_from_options(options)
    enableDumpStack()

    logger.info('Privstream Command: {}'.format(' '.join(sys.argv)))
    logger.info('Privstream Commit: {}'.format(privstream_commit))
    start_time = timeit.default_timer()

    try:
        config = ConfigWrapper.load(options.configFile)
        options.func(options, config)
    except ValidationError as e:
        logger.error("privstream {}: {}".format(options.command, e))
        return 1
    except (PrivstreamError, OSError) as e:
        logger.error("privstream {} failed: {}".format(options.command, e))
        return 2

    end_time = timeit.default_timer()
    run_time = end_time - start_time
    logger.info("privstream {} has finished after {} seconds".format(options.command, run_time))
    return 0

if __name__ == '__main__':
    sys.exit(main())
