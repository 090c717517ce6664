# ===================================================================
# 1. IMPORTS
# ===================================================================
import logging
import os
from collections.abc import Callable
from pathlib import Path
from typing import Any

import pandas as pd
from dotenv import load_dotenv
from nicegui import run, ui

from .cli import execute_command_validators, run_command
from .command_definitions import COMMANDS_BY_NAME
from .utils import ConfigField, ENV_PORT, LOG_FORMAT, log_level_name
from .validation import MmdScapeError

load_dotenv()
logging.basicConfig(level=log_level_name(), format=LOG_FORMAT)
logger = logging.getLogger(__name__)

# ===================================================================
# 2. RESULTS
# ===================================================================

def _read_results(out_dir: Path) -> tuple[pd.DataFrame | None, str | None]:
    csv_path = out_dir / 'results.csv'
    if not csv_path.exists():
        csv_path = out_dir / 'critical_points.csv'
    frame = pd.read_csv(csv_path) if csv_path.exists() else None
    svg_path = out_dir / 'plot.svg'
    svg = svg_path.read_text(encoding='utf-8') if svg_path.exists() else None
    return frame, svg

# ===================================================================
# 3. UI RENDERING ENGINE
# ===================================================================

def _display_value(field: ConfigField, value: Any) -> Any:
    if field.multiple and field.ui_type == 'text' and isinstance(value, list):
        return ','.join(str(v) for v in value)
    return value

def create_field(field: ConfigField, form_data: dict[str, Any], errors: dict[str, str]) -> None:
    """One input element per ConfigField, bound to form_data[field.key]."""
    def on_change(e: Any) -> None:
        form_data[field.key] = e.value

    value = _display_value(field, form_data.get(field.key))
    creator_map: dict[str, Callable[[], Any]] = {
        'number': lambda: ui.input(field.label, value='' if value is None else str(value), on_change=on_change),
        'text': lambda: ui.input(field.label, value='' if value is None else str(value), on_change=on_change),
        'select': lambda: ui.select(field.options or [], label=field.label, value=value, on_change=on_change),
        'multiselect': lambda: ui.select(field.options or [], label=field.label, value=value or [],
                                         multiple=True, on_change=on_change),
        'checkbox': lambda: ui.checkbox(field.label, value=bool(value), on_change=on_change),
    }
    creator = creator_map.get(field.ui_type)
    if not creator:
        raise ValueError(f"Unsupported UI type: {field.ui_type}")
    element = creator()
    if field.ui_type != 'checkbox':
        props_list = ['outlined', 'dense']
        message = errors.get(field.key)
        if message:
            props_list.append(f"error-message='{message}'")
            props_list.append('error')
        element.props(' '.join(props_list)).classes('w-full')

def _initial_form_data(command: str) -> dict[str, Any]:
    command_def = COMMANDS_BY_NAME[command]
    form_data = {conf['field'].key: conf['field'].default_value for conf in command_def['fields']}
    form_data.update(command_def.get('defaults', {}))
    return form_data

def _coerced(command: str, form_data: dict[str, Any]) -> dict[str, Any]:
    """Form values with blank inputs dropped, so the lower config layers apply."""
    fields = {conf['field'].key: conf['field'] for conf in COMMANDS_BY_NAME[command]['fields']}
    return {key: fields[key].coerce(value) for key, value in form_data.items() if value not in ('', None)}

@ui.page('/')
def main_page() -> None:
    state: dict[str, Any] = {'command': 'recover', 'errors': {}}
    state['form_data'] = _initial_form_data(state['command'])

    @ui.refreshable
    def render_form() -> None:
        command_def = COMMANDS_BY_NAME[state['command']]
        ui.label(command_def['title']).classes('text-h6 q-mb-xs')
        ui.markdown(command_def['description'])
        for field_conf in command_def['fields']:
            create_field(field_conf['field'], state['form_data'], state['errors'])

    @ui.refreshable
    def render_results() -> None:
        out = state['form_data'].get('out')
        if not state.get('ran') or not out:
            return
        frame, svg = _read_results(Path(out))
        if frame is not None:
            ui.table(
                columns=[{'name': c, 'label': c, 'field': c} for c in frame.columns],
                rows=frame.astype(str).to_dict('records'),
            ).classes('w-full')
        if svg:
            ui.html(svg)

    def select_command(e: Any) -> None:
        state['command'] = e.value
        state['form_data'] = _initial_form_data(e.value)
        state['errors'] = {}
        state['ran'] = False
        render_form.refresh()
        render_results.refresh()

    async def attempt_run(button: ui.button) -> None:
        button.disable()
        try:
            command = state['command']
            try:
                values = _coerced(command, state['form_data'])
            except MmdScapeError as e:
                ui.notification(str(e), type='negative', multi_line=True)
                return
            merged = {**_initial_form_data(command), **values}
            all_valid, new_errors = execute_command_validators(COMMANDS_BY_NAME[command], merged)
            state['errors'] = new_errors
            if not all_valid:
                for error_message in new_errors.values():
                    ui.notification(error_message, type='negative', multi_line=True)
                render_form.refresh()
                return
            ui.notify(f"Running {command}...")
            try:
                code = await run.cpu_bound(run_command, command, values)
            except MmdScapeError as e:
                logger.error(f"{command} failed: {e}")
                ui.notify(str(e), type='negative')
                return
            state['ran'] = True
            ui.notify(f"{command} finished (exit {code})", type='positive' if code == 0 else 'warning')
            render_results.refresh()
        finally:
            button.enable()

    with ui.header(elevated=True).classes('bg-primary text-white q-pa-sm items-center'):
        ui.label("mmdscape").classes('text-h5')
    with ui.column().classes('w-full items-center'):
        with ui.card().classes('q-pa-md shadow-4').style('width: 95%; max-width: 900px;'):
            ui.select(list(COMMANDS_BY_NAME), label='Command', value=state['command'],
                      on_change=select_command).props('outlined dense').classes('w-full')
            render_form()
            run_button = ui.button('Run', icon='play_arrow')
            run_button.on_click(lambda: attempt_run(run_button))
        with ui.card().classes('q-pa-md').style('width: 95%; max-width: 1200px;'):
            render_results()

if __name__ in {"__main__", "__mp_main__"}:
    port = int(os.environ.get(ENV_PORT, 8080))
    ui.run(host='0.0.0.0', port=port, title='mmdscape', reload=False)
