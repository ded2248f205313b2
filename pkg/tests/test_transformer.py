from __future__ import annotations

import numpy as np
import pytest

from personapkt.backbone import BackboneModel, PrefixParams, deployed_count, forward_lm
from personapkt.backbone.tokenizer import DialogueSample
from personapkt.backbone.transformer import lm_loss, weight_bytes
from personapkt.exceptions import ContextOverflowError, DataError, ShapeError
from personapkt.models.config import BackboneConfig, PersonaTrainConfig, PrefixConfig
from personapkt.models.types import Part
from personapkt.pipeline import train_personalized

IDS = [2, 4, 7, 9, 11, 5]


def test_empty_prefix_is_bit_identical_to_no_prefix(backbone: BackboneModel) -> None:
    without = forward_lm(backbone, None, IDS).probs
    empty = forward_lm(backbone, PrefixParams.empty(backbone.config), IDS).probs
    np.testing.assert_array_equal(without, empty)


def test_distributions_and_attention_rows_are_normalized(
    backbone: BackboneModel, prefix_config: PrefixConfig
) -> None:
    prefix = PrefixParams.random(backbone.config, prefix_config, seed=0)
    result = forward_lm(backbone, prefix, IDS, return_attention=True)
    np.testing.assert_allclose(result.probs.sum(axis=-1), 1.0, atol=1e-12)
    assert len(result.attention) == backbone.config.n_layers
    for weights in result.attention:
        width = prefix_config.prefix_len + len(IDS)
        assert weights.shape == (backbone.config.n_heads, len(IDS), width)
        np.testing.assert_allclose(weights.sum(axis=-1), 1.0, atol=1e-12)


def test_tokens_attend_to_prefix_and_past_only(
    backbone: BackboneModel, prefix_config: PrefixConfig
) -> None:
    prefix = PrefixParams.random(backbone.config, prefix_config, seed=0)
    weights = forward_lm(backbone, prefix, IDS, return_attention=True).attention[0]
    prefix_len = prefix_config.prefix_len
    future = np.triu(np.ones((len(IDS), len(IDS)), dtype=bool), k=1)
    assert np.all(weights[:, :, prefix_len:][:, future] < 1e-300)
    assert np.all(weights[:, :, :prefix_len] > 0)


def test_prefix_changes_output_and_causality_holds(
    backbone: BackboneModel, prefix_config: PrefixConfig
) -> None:
    prefix = PrefixParams.random(backbone.config, prefix_config, seed=0)
    plain = forward_lm(backbone, None, IDS).probs
    prefixed = forward_lm(backbone, prefix, IDS).probs
    assert not np.allclose(plain, prefixed)
    changed = forward_lm(backbone, prefix, [*IDS[:-1], 3]).probs
    np.testing.assert_allclose(prefixed[:-1], changed[:-1], rtol=0, atol=1e-12)


def test_context_overflow_names_lengths(
    backbone: BackboneModel, prefix_config: PrefixConfig
) -> None:
    prefix = PrefixParams.random(backbone.config, prefix_config, seed=0)
    budget = backbone.config.max_context - prefix_config.prefix_len
    forward_lm(backbone, prefix, [4] * budget)
    with pytest.raises(ContextOverflowError, match=f"input of {budget + 1} tokens"):
        forward_lm(backbone, prefix, [4] * (budget + 1))
    with pytest.raises(DataError, match="empty input"):
        forward_lm(backbone, prefix, [])


def test_prefix_shape_must_match_backbone(backbone: BackboneModel) -> None:
    wrong = PrefixParams(np.zeros((backbone.config.n_layers + 1, 2, 2, backbone.config.d_model)))
    with pytest.raises(ShapeError, match="expected"):
        forward_lm(backbone, wrong, IDS)


def test_deployed_prefix_layout(backbone: BackboneModel, prefix_config: PrefixConfig) -> None:
    prefix = PrefixParams.random(backbone.config, prefix_config, seed=0)
    config = backbone.config
    assert prefix.deployed.shape == (config.n_layers, 2, prefix_config.prefix_len, config.d_model)
    assert prefix.deployed_count == deployed_count(
        config.n_layers, prefix_config.prefix_len, config.d_model
    )


def test_backbone_weights_are_read_only(backbone: BackboneModel) -> None:
    with pytest.raises(ValueError, match="read-only"):
        backbone.weights["wte"][0, 0] = 1.0


def test_digest_identifies_weights(backbone: BackboneModel) -> None:
    weights = backbone.trainable_copy()
    assert BackboneModel(backbone.config, weights, backbone.tokenizer).digest == backbone.digest
    weights["lnf.beta"][0] += 1e-9
    assert BackboneModel(backbone.config, weights, backbone.tokenizer).digest != backbone.digest


def test_vocab_size_must_match_tokenizer(backbone: BackboneModel) -> None:
    config = BackboneConfig(vocab_size=backbone.config.vocab_size + 1, d_model=16, n_heads=2)
    with pytest.raises(DataError, match="vocabulary has"):
        BackboneModel(config, {}, backbone.tokenizer)


def test_prefix_training_leaves_backbone_bytes_unchanged(
    backbone: BackboneModel, synthetic_dataset, prefix_config: PrefixConfig
) -> None:
    before = weight_bytes(backbone.config, backbone.weights)
    persona = synthetic_dataset.members(Part.B)[0]
    train_personalized(
        backbone,
        None,
        persona,
        synthetic_dataset.split(persona.persona_id),
        PersonaTrainConfig(max_epochs=1),
        prefix_config,
    )
    assert weight_bytes(backbone.config, backbone.weights) == before


def test_loss_scores_only_the_response_positions(
    backbone: BackboneModel, prefix_config: PrefixConfig
) -> None:
    prefix = PrefixParams.random(backbone.config, prefix_config, seed=1)
    sample = DialogueSample(context=(2, 4, 7), target=(9, 11, 5))
    probs = forward_lm(backbone, prefix, sample.input_ids).probs
    picked = probs[[2, 3, 4], list(sample.target)]
    expected = -np.mean(np.log(picked))

    loss = lm_loss(backbone, prefix, sample)

    assert float(loss.data) == pytest.approx(expected, rel=1e-9)
    with pytest.raises(DataError, match="empty target"):
        lm_loss(backbone, prefix, DialogueSample(context=(2, 4), target=()))


def test_zero_weights_give_uniform_loss(backbone: BackboneModel) -> None:
    zeros = {name: np.zeros_like(w) for name, w in backbone.weights.items()}
    uniform = BackboneModel(backbone.config, zeros, backbone.tokenizer)
    sample = DialogueSample(context=(2, 4, 7), target=(9, 11, 5))

    loss = lm_loss(uniform, None, sample)

    assert loss.item() == pytest.approx(np.log(backbone.config.vocab_size), rel=1e-12)
