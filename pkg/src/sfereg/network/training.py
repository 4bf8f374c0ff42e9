from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from loguru import logger
from pydantic import BaseModel, Field

from sfereg.data.motion import SamplePair
from sfereg.errors import ConfigError, NumericalError
from sfereg.evaluation.metrics import delta_r, delta_t
from sfereg.geometry.rigid import RigidParams
from sfereg.network.regnet import RegistrationNet, volumes_to_tensor
from sfereg.tensor import ops
from sfereg.tensor.checkpoint import save_checkpoint
from sfereg.tensor.optim import Adam
from sfereg.tensor.tensor import Tape, Tensor, default_dtype
from sfereg.util import derive_seed


class TrainConfig(BaseModel):
    epochs: int = Field(300, ge=1)
    lr: float = Field(5e-5, gt=0, description="Initial learning rate")
    lr_decay: float = Field(0.99, gt=0, le=1, description="Multiplied into the learning rate every epoch")
    beta1: float = Field(0.5, ge=0, lt=1)
    beta2: float = Field(0.99, ge=0, lt=1)
    eps: float = Field(1e-8, gt=0)
    batch_size: int = Field(4, ge=1)
    seed: int = Field(0, description="Shuffling seed")
    checkpoint_every: int = Field(0, ge=0, description="Extra checkpoint cadence in epochs; 0 keeps only the best")

    def lr_at(self, epoch: int) -> float:
        return self.lr * self.lr_decay**epoch


class EpochRecord(BaseModel):
    epoch: int
    train_loss: float
    val_dT: float
    val_dR: float
    lr: float
    val_component_mae: list[float] = Field(..., description="Mean |error| per parameter on validation")


@dataclass
class TrainResult:
    model: RegistrationNet
    history: list[EpochRecord] = field(default_factory=list)
    best_epoch: int = -1
    best_val_dT: float = float("inf")


def _targets(batch: list[SamplePair]) -> Tensor:
    return Tensor(np.stack([s.truth.as_array() for s in batch]), dtype=default_dtype())


def validate(model: RegistrationNet, samples: list[SamplePair], batch_size: int) -> tuple[float, float, np.ndarray]:
    preds = []
    for start in range(0, len(samples), batch_size):
        batch = samples[start : start + batch_size]
        preds.append(model.predict([s.mu_moved for s in batch], [s.spect for s in batch]))
    predicted = np.concatenate(preds)
    truths = np.stack([s.truth.as_array() for s in samples])
    spacing = samples[0].mu_registered.spacing_mm[0]
    d_t = [delta_t(RigidParams.from_array(p), s.truth, spacing) for p, s in zip(predicted, samples)]
    d_r = [delta_r(RigidParams.from_array(p), s.truth) for p, s in zip(predicted, samples)]
    return float(np.mean(d_t)), float(np.mean(d_r)), np.abs(predicted - truths).mean(axis=0)


def train(
    train_set: list[SamplePair],
    val_set: list[SamplePair],
    model: RegistrationNet,
    cfg: TrainConfig,
    out_dir: str | Path | None = None,
) -> TrainResult:
    """
    Minibatch Adam on the L1 distance between predicted and true parameters.

    The learning rate decays once per epoch and the weights with the lowest
    validation translation error are restored at the end.
    """
    if not train_set or not val_set:
        raise ConfigError("Training needs non-empty train and validation splits")
    out_dir = Path(out_dir) if out_dir is not None else None
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "metrics.jsonl").unlink(missing_ok=True)
    optimizer = Adam(model.parameters(), cfg.lr, cfg.beta1, cfg.beta2, cfg.eps)
    result = TrainResult(model)
    best_state = model.state()
    logger.info(
        f"Training {model.parameter_count()} parameters (DuSFE: {model.dusfe_parameter_count()}) "
        f"on {len(train_set)} cases for {cfg.epochs} epochs"
    )

    for epoch in range(cfg.epochs):
        optimizer.lr = cfg.lr_at(epoch)
        order = np.random.default_rng(derive_seed(cfg.seed, f"epoch-{epoch}")).permutation(len(train_set))
        loss_sum = 0.0
        for b, start in enumerate(range(0, len(order), cfg.batch_size)):
            batch = [train_set[i] for i in order[start : start + cfg.batch_size]]
            with Tape() as tape:
                pred = model(
                    volumes_to_tensor([s.mu_moved for s in batch]),
                    volumes_to_tensor([s.spect for s in batch]),
                )
                loss = ops.l1_loss(pred, _targets(batch))
                if not np.isfinite(loss.item()):
                    raise NumericalError(
                        f"Non-finite loss in epoch {epoch}, batch {b}: cases {[s.case_id for s in batch]}"
                    )
                grads = tape.backward(loss)
            optimizer.step(grads)
            loss_sum += loss.item() * len(batch)

        val_dT, val_dR, component_mae = validate(model, val_set, cfg.batch_size)
        record = EpochRecord(
            epoch=epoch,
            train_loss=loss_sum / len(train_set),
            val_dT=val_dT,
            val_dR=val_dR,
            lr=optimizer.lr,
            val_component_mae=component_mae.tolist(),
        )
        result.history.append(record)
        logger.info(
            f"epoch {epoch}: train L1 {record.train_loss:.4f}, val dT {val_dT:.2f} mm, "
            f"val dR {val_dR:.2f} deg, lr {optimizer.lr:.2e}"
        )
        if out_dir is not None:
            with open(out_dir / "metrics.jsonl", "a", encoding="utf-8") as f:
                f.write(record.model_dump_json() + "\n")

        if val_dT < result.best_val_dT:
            result.best_val_dT, result.best_epoch = val_dT, epoch
            best_state = model.state()
            if out_dir is not None:
                save_checkpoint(out_dir / "best.ckpt.json", model.parameters(), _meta(model, epoch))
            logger.info(f"New best validation dT {val_dT:.2f} mm at epoch {epoch}")
        if out_dir is not None and cfg.checkpoint_every and (epoch + 1) % cfg.checkpoint_every == 0:
            save_checkpoint(out_dir / f"epoch{epoch + 1:04d}.ckpt.json", model.parameters(), _meta(model, epoch))

    model.load_state(best_state)
    return result


def _meta(model: RegistrationNet, epoch: int) -> dict:
    return {"epoch": epoch, "model_config": model.cfg.model_dump(mode="json")}
