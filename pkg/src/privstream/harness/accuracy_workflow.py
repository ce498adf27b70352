#!/usr/bin/env python3

#Released under the MIT license, see LICENSE.txt

""" Toil workflow for the accuracy experiments: one child job per (scenario,
seed), then a follow-on job that gathers the summary table.
"""
import os
import timeit

from toil.job import Job
from toil.realtimeLogger import RealtimeLogger

from privstream.harness.experiment import run_accuracy_experiment, summary_csv
from privstream.harness.synthetic import scenario_dataset, ingest_csv
from privstream.shared.common import make_rng, privstream_realtime_log

def experiment_name(scenario, seed):
    return "{}_seed{}".format(scenario.split(' ')[0], seed)

def accuracy_workflow(job, config, params, scenarios, seeds, trials, mode, csv_ids=None):
    """ csv_ids maps a scenario label to an imported station CSV; any other scenario
    is synthesized from the config """
    root_job = Job()
    job.addChild(root_job)
    results = []
    for scenario in scenarios:
        for seed in seeds:
            csv_id = (csv_ids or {}).get(scenario)
            results.append(root_job.addChildJobFn(accuracy_experiment_job, config, params, scenario, seed, trials,
                                                  mode, csv_id).rv())
    summary_job = root_job.addFollowOnJobFn(accuracy_summary_job, results)
    return summary_job.rv()

def accuracy_experiment_job(job, config, params, scenario, seed, trials, mode, csv_id=None):
    """ run one experiment, returning its summary row and the per-station CSV """
    work_dir = job.fileStore.getLocalTempDir()
    start_time = timeit.default_timer()
    if csv_id is not None:
        csv_path = os.path.join(work_dir, scenario + '.csv')
        job.fileStore.readGlobalFile(csv_id, csv_path)
        dataset = ingest_csv(csv_path)
        dataset.scenario_label = scenario
    else:
        # the dataset and the answers use separate streams of the same seed
        dataset = scenario_dataset(scenario, config, make_rng((seed, 0)))
    result = run_accuracy_experiment(dataset, params, trials, seed, mode)
    out_path = os.path.join(work_dir, experiment_name(scenario, seed) + '.csv')
    result.write_csv(out_path)
    privstream_realtime_log("{} seed {}: {} stations, avg relative error {:.6f}, avg RMSE {:.6f} ({:.1f}s)".format(
        scenario, seed, len(dataset), result.avg_signed_relative_error, result.avg_rmse,
        timeit.default_timer() - start_time))
    return {'name': experiment_name(scenario, seed), 'summary': result.summary_row(),
            'csv': job.fileStore.writeGlobalFile(out_path)}

def accuracy_summary_job(job, results):
    """ one summary row per experiment """
    work_dir = job.fileStore.getLocalTempDir()
    summary_path = os.path.join(work_dir, 'summary.csv')
    with open(summary_path, 'w') as summary_file:
        summary_file.write(summary_csv([r['summary'] for r in results]))
    RealtimeLogger.info("Summarized {} accuracy experiments".format(len(results)))
    return {'summary': job.fileStore.writeGlobalFile(summary_path),
            'rows': [r['summary'] for r in results],
            'experiments': {r['name']: r['csv'] for r in results}}
