"""Edge-privacy inference attack laboratory for inductive GNNs."""

from .attacks import (AttackSpec, LpsTable, aux_features, compute_lps,
                      compute_lps_table, lps_inf1, lps_inf2, lps_inf3, lps_sim,
                      lps_sim2, run_attack, select_predictions)
from .baselines import lsa0_scores, lta_scores
from .defenses import DefenseSpec, apply_defense, edge_rand, lap_graph
from .distances import DistanceMetric, distance
from .evaluation import (ExperimentConfig, ExperimentReport, auc,
                         build_candidate_set, config_from_file, estimate_degree,
                         metrics, run_experiment, select_targets, write_report_csv)
from .graph import (Graph, Snapshot, generate_sbm, graphs_equal, k_hop_neighbors,
                    load_graph, restore, snapshot, write_graph)
from .models import (GnnModel, ModelConfig, forward, gat_layer, gcn_layer,
                     gin_layer, init_model, posterior, read_model, sage_layer,
                     write_model)
from .service import (AccessDeniedError, AttackSession, ServiceConfig,
                      VictimService, mask_posterior)
from .training import TrainConfig, loss_and_grad, train

__version__ = "0.1.0"
