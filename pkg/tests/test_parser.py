"""ContractSpec DSL parsing: schema, semantics, spans, round trips, fuzz."""

import os
import textwrap

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from agentcontracts.assets import asset_path
from agentcontracts.errors import (
    ContractError,
    DslSyntaxError,
    SchemaError,
    SemanticError,
)
from agentcontracts.model import validate_contract
from agentcontracts.parser import (
    contract_to_yaml,
    load_contract,
    load_document,
    parse_contract,
    parse_document,
    parse_pipeline,
)

FINANCIAL = asset_path("contracts", "financial-advisor.yaml")


class TestAgentDocuments:
    def test_financial_advisor_structure(self):
        contract = load_contract(FINANCIAL)
        assert contract.kind == "agent"
        assert len(contract.preconditions) == 1
        assert len(contract.invariants_hard) >= 1
        assert len(contract.invariants_soft) >= 1
        assert any(c.recovery for c in contract.invariants_soft)
        assert len(contract.governance_hard) >= 1
        assert validate_contract(contract) == []

    def test_parse_result_validates_clean(self):
        contract = load_contract(FINANCIAL)
        assert [i for i in validate_contract(contract) if i.severity == "error"] == []

    def test_missing_kind(self):
        with pytest.raises(SchemaError) as exc:
            parse_contract('contractspec: "1.0"\nname: x\n')
        assert exc.value.field == "kind"

    def test_satisfaction_p_out_of_range(self):
        doc = 'contractspec: "1.0"\nkind: agent\nname: x\nsatisfaction: {p: 1.3}\n'
        with pytest.raises(SchemaError) as exc:
            parse_contract(doc)
        assert "p out of [0.0,1.0]" in str(exc.value)

    def test_unknown_top_level_key(self):
        doc = 'contractspec: "1.0"\nkind: agent\nname: x\nbogus: 1\n'
        with pytest.raises(SchemaError) as exc:
            parse_contract(doc)
        assert "bogus" in str(exc.value)

    def test_schema_error_carries_span(self):
        doc = textwrap.dedent("""\
            contractspec: "1.0"
            kind: agent
            name: x
            satisfaction:
              p: 2.5
        """)
        with pytest.raises(SchemaError) as exc:
            parse_contract(doc)
        assert exc.value.span is not None
        assert exc.value.span.line == 5

    def test_dangling_recovery_is_semantic_error(self):
        doc = textwrap.dedent("""\
            contractspec: "1.0"
            kind: agent
            name: x
            invariants:
              soft:
                - name: tone
                  check: {field: output.tone, operator: ge, value: 0.5}
                  recovery: fix-tone
        """)
        with pytest.raises(SemanticError) as exc:
            parse_contract(doc)
        assert "fix-tone" in str(exc.value)

    def test_cyclic_fallback_is_semantic_error(self):
        doc = textwrap.dedent("""\
            contractspec: "1.0"
            kind: agent
            name: x
            invariants:
              soft:
                - name: tone
                  check: {field: output.tone, operator: ge, value: 0.5}
                  recovery: a
            recovery:
              strategies:
                - {name: a, type: re_prompt, fallback: b}
                - {name: b, type: re_prompt, fallback: a}
        """)
        with pytest.raises(SemanticError) as exc:
            parse_contract(doc)
        assert "acyclic" in str(exc.value)

    def test_check_requires_exactly_one_form(self):
        doc = textwrap.dedent("""\
            contractspec: "1.0"
            kind: agent
            name: x
            preconditions:
              - name: p
                check: {field: a, operator: eq, value: 1, expr: "a == 1"}
        """)
        with pytest.raises(SchemaError):
            parse_contract(doc)

    def test_forbidden_expression_is_schema_error(self):
        doc = textwrap.dedent("""\
            contractspec: "1.0"
            kind: agent
            name: x
            preconditions:
              - name: p
                check: {expr: "__import__('os')"}
        """)
        with pytest.raises(SchemaError) as exc:
            parse_contract(doc)
        assert exc.value.field == "expr"

    def test_numeric_operands_become_floats(self):
        doc = textwrap.dedent("""\
            contractspec: "1.0"
            kind: agent
            name: x
            preconditions:
              - name: p
                check: {field: a, operator: range, value: [1, 5]}
        """)
        contract = parse_contract(doc)
        assert contract.preconditions[0].check.operand == [1.0, 5.0]

    def test_malformed_yaml_is_syntax_error_with_span(self):
        with pytest.raises(DslSyntaxError) as exc:
            parse_contract("kind: [unclosed\n  - x: {")
        assert exc.value.span is not None

    def test_determinism(self):
        text = open(FINANCIAL, "rb").read()
        assert parse_contract(text) == parse_contract(text)

    def test_round_trip_field_by_field(self):
        contract = load_contract(FINANCIAL)
        assert parse_contract(contract_to_yaml(contract)) == contract

    def test_round_trip_randomized_contracts(self):
        import numpy as np
        from helpers import random_contract
        rng = np.random.default_rng(404)
        for _ in range(60):
            contract = random_contract(rng)
            assert parse_contract(contract_to_yaml(contract)) == contract


class TestPipelineDocuments:
    @pytest.fixture()
    def pipeline_dir(self, tmp_path):
        stage = textwrap.dedent("""\
            contractspec: "1.0"
            kind: agent
            name: {name}
            invariants:
              hard:
                - name: {name}-ok
                  check: {{field: data.ok, operator: eq, value: true}}
            satisfaction: {{p: 0.95, delta: 0.02, k: 1}}
        """)
        (tmp_path / "a.yaml").write_text(stage.format(name="stage-a"))
        (tmp_path / "b.yaml").write_text(stage.format(name="stage-b"))
        (tmp_path / "pipe.yaml").write_text(textwrap.dedent("""\
            contractspec: "1.0"
            kind: pipeline
            name: demo-pipe
            stages:
              - {name: first, contract: a.yaml}
              - {name: second, contract: b.yaml}
            handoffs:
              - from: first
                to: second
                p_h: 0.98
                delta_h: 0.01
                invariants:
                  - name: handoff-ok
                    check: {field: data.value, operator: range, value: [0, 1]}
                type_map: {data.value: data.value}
        """))
        return tmp_path

    def test_pipeline_resolves_relative_stage_paths(self, pipeline_dir):
        pipeline = load_document(str(pipeline_dir / "pipe.yaml"))
        assert pipeline.name == "demo-pipe"
        assert [s.contract.name for s in pipeline.stages] == ["stage-a", "stage-b"]
        assert pipeline.handoffs[0].p_h == 0.98
        assert pipeline.handoffs[0].type_map == {"data.value": "data.value"}

    def test_handoff_stage_names_must_chain(self, pipeline_dir):
        text = (pipeline_dir / "pipe.yaml").read_text().replace("to: second", "to: third")
        with pytest.raises(SemanticError):
            parse_pipeline(text, base_dir=str(pipeline_dir))

    def test_missing_stage_contract(self, pipeline_dir):
        os.remove(pipeline_dir / "b.yaml")
        with pytest.raises(SemanticError):
            load_document(str(pipeline_dir / "pipe.yaml"))

    def test_parse_contract_rejects_pipeline(self, pipeline_dir):
        with pytest.raises(SchemaError):
            parse_contract((pipeline_dir / "pipe.yaml").read_text())


@given(st.binary(max_size=400))
@settings(max_examples=300, deadline=None)
def test_fuzz_terminates_with_library_error(data):
    """Arbitrary bytes: success or a ContractError, never a crash."""
    try:
        parse_document(data)
    except ContractError:
        pass


@given(st.text(max_size=400))
@settings(max_examples=200, deadline=None)
def test_fuzz_text_terminates(data):
    try:
        parse_document(data)
    except ContractError:
        pass
