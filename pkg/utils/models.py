"""
Registry of the four models: how to parse their parameters, build their
traces, name their queries and re-check decoded schedules.
"""

from dataclasses import dataclass
from typing import Callable

from utils import linux_lb, pkt_sched, srpt, worksteal
from utils.errors import ConfigError


@dataclass
class ModelEntry:
    name: str
    config_cls: type
    build_trace: Callable
    queries: Callable
    discipline: Callable
    description: str = ""
    pre: Callable | None = None

    def config(self, params):
        return self.config_cls.from_params(params or {})

    def query(self, config, name):
        if self.pre is not None:
            self.pre(config, name)
        available = self.queries(config)
        if name not in available:
            raise ConfigError(f"model {self.name!r} has no query {name!r} "
                              f"(available: {', '.join(sorted(available)) or 'none'})")
        return available[name]

    def check_discipline(self, schedule, config):
        return self.discipline(schedule, config)


def _srpt_pre(config, name):
    if name == "deadline" and (config.a_srpt is None or config.a_query is None):
        raise ConfigError("the deadline query needs a_srpt and a_query")


def _pkt_pre(config, name):
    if name == "starvation":
        config.validate_starvation()


MODELS = {
    worksteal.MODEL: ModelEntry(
        worksteal.MODEL, worksteal.WorkStealConfig, worksteal.build_ws_trace, worksteal.ws_queries,
        lambda schedule, config: worksteal.check_ws_discipline(schedule),
        "work stealing over a task DAG with switching costs"),
    srpt.MODEL: ModelEntry(
        srpt.MODEL, srpt.SrptConfig, srpt.build_srpt_trace, srpt.srpt_queries,
        lambda schedule, config: srpt.check_srpt_discipline(schedule),
        "non-preemptive SRPT with blocking tasks", _srpt_pre),
    linux_lb.MODEL: ModelEntry(
        linux_lb.MODEL, linux_lb.LbConfig, linux_lb.build_lb_trace, linux_lb.lb_queries,
        linux_lb.check_lb_discipline, "CFS load balancing, four CPUs in two groups", linux_lb.lb_query_pre),
    pkt_sched.MODEL: ModelEntry(
        pkt_sched.MODEL, pkt_sched.PktConfig, pkt_sched.build_pkt_trace, pkt_sched.pkt_queries,
        pkt_sched.check_pkt_discipline, "fifo / priority / round-robin packet scheduling", _pkt_pre),
}


def get_model(name):
    try:
        return MODELS[name]
    except KeyError:
        raise ConfigError(f"unknown model {name!r} (expected one of {', '.join(MODELS)})") from None
