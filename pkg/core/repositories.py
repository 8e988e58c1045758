from .models import RoundResult, SimulationRun


class SimulationRunRepository:
    """Repository for simulation run records"""

    @staticmethod
    def create_run(config):
        return SimulationRun.objects.create(
            config=config,
            seed=config['seed'],
            out_dir=config['out_dir'],
        )

    @staticmethod
    def mark_completed(run, artifacts):
        run.status = 'completed'
        run.artifacts = artifacts
        run.save()
        return run

    @staticmethod
    def mark_failed(run, error):
        run.status = 'failed'
        run.error = error
        run.save()
        return run


class RoundResultRepository:
    """Repository for per-round metrics"""

    @staticmethod
    def create_round_results(run, reports):
        return RoundResult.objects.bulk_create([
            RoundResult(
                run=run,
                client_count=report.client_count,
                round=report.round,
                average_local_accuracy=report.average_local_accuracy,
                global_accuracy=report.global_accuracy,
                local_accuracies={str(cid): acc for cid, acc in zip(report.client_ids, report.local_accuracies)},
                factors={str(cid): f for cid, f in zip(report.client_ids, report.factors)},
                rejected=report.rejected,
                chain_length=report.chain_length,
                heterogeneity=report.heterogeneity,
            )
            for report in reports
        ])

    @staticmethod
    def get_rounds_for_run(run):
        return RoundResult.objects.filter(run=run).order_by('client_count', 'round')

    @staticmethod
    def get_final_rounds(run):
        """Last round of every sweep entry, for the global vs local comparison"""
        finals = {}
        for result in RoundResultRepository.get_rounds_for_run(run):
            finals[result.client_count] = result
        return [finals[count] for count in sorted(finals)]
