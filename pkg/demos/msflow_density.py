"""Mixture of Gaussians versus mixture plus conditional coupling flow."""

from msgen.data import sample_dataset
from msgen.msflow import MSFlowConfig, evaluate, train_msflow

train, test = sample_dataset(3000, seed=0).split()


def show(record):
    print("epoch", record["epoch"], "nll", round(record["nll"], 1))


gmm, flow = train_msflow(MSFlowConfig(epochs=5, hidden=64), train, log=show)
rep = evaluate(gmm, flow, test.flat)
print(f"held-out log density  gmm {rep['gmm_logpdf']:.1f}  flow {rep['flow_logpdf']:.1f}")
