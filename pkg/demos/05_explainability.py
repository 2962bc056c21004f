#!/usr/bin/env python3
"""From attention coefficients to brain-region importance.

Extracts the final attention layer of a (briefly) trained model, maps
coefficients back onto Brodmann areas per band, combines bands by max,
and contrasts attention in-degree with the classical coherence-based
metrics (weighted clustering, edge betweenness).
"""

import numpy as np

from neurograph import synth_cohort
from neurograph.explain import (
    centrality_report,
    combine_bands,
    extract_attention,
    weighted_in_degree,
)
from neurograph.export import export_graph, from_band_centrality
from neurograph.model import ModelConfig, compile_graph
from neurograph.training import TrainConfig, prepare_inputs, stratified_val_split, train_single
from neurograph.encoding import assemble_features
from neurograph.rewiring import rewire_patient

cohort = synth_cohort(24, 42)
graphs, targets, classes = prepare_inputs(cohort)
train_idx, val_idx = stratified_val_split(np.arange(len(cohort)), classes, 0.2, 0)
model, _ = train_single(graphs, targets, train_idx, val_idx, ModelConfig(),
                        TrainConfig(max_epochs=25, early_stop_patience=25), init_seed=0)

patient = cohort.patients[0]
graph = assemble_features(rewire_patient(patient, list(cohort.areas)))
report = extract_attention(model, compile_graph(graph), graph)

print(f"patient {patient.patient_id}: nihss {patient.nihss}, "
      f"stroke side {patient.stroke_side.value}")
for band, att in report.bands.items():
    print(f"  {band.name:6} attention edges: {len(att.edges)}")

combined = combine_bands([report.bands[l.band] for l in graph.layers])
in_degree = weighted_in_degree(combined)
top = np.argsort(in_degree)[-8:][::-1]
print("\nmost attended areas (band-max combined graph):")
for node in top:
    print(f"  {graph.labels[node]:8} in-degree {in_degree[node]:.3f}")

tables = centrality_report(report, graph, weighted_paths=True)
alpha1 = tables[0]
corr = np.corrcoef(alpha1.attention_in_degree, alpha1.coherence_clustering)[0, 1]
print(f"\nalpha1: corr(attention in-degree, coherence clustering) = {corr:.3f}")

for table in tables:
    path = export_graph(from_band_centrality(table), "dot", f"/tmp/demo_{table.band_name}.dot")
    print(f"wrote {path}")
